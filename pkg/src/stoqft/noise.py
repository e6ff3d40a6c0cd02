"""Wiener-process and spacetime white-noise sampling with momentum-space transforms.

Conventions:
  * Ito sums are left-point (non-anticipating): integrand evaluated at interval
    left endpoints t_j, increments dW_{t_j} ~ N(0, dt).
  * The spacetime lattice spans t in [-T, T) and a periodic box of side L;
    each cell carries an independent Gaussian increment of variance dt*d3x.
  * Momentum modes: p_i = 2*pi*n/L componentwise, p0 = k*pi/T, in FFT ordering.
    W(p) = sum_x dW(x) exp{i(p.x - p0 t)}; Re/Im W(p) for p0 > 0 are iid
    N(0, TV) with TV = (2*pi)^4/(2 d4p) = T*V.  Self-conjugate lattice modes
    (p = -p on the grid) are real with doubled variance 2TV.
"""
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .rng import stream_rng

_MAGIC = b"STQN"
_VERSION = 1


def as_rng(seed, label="noise"):
    """Accept either an integer master seed or a ready Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return stream_rng(seed, label)


# ---------------------------------------------------------------------------
# Wiener process on a 1D time grid
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WienerIncrements:
    """Ito increments dW_{t_j} on the uniform grid t_j = t0 + j*dt."""
    t0: float
    dt: float
    increments: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.increments, dtype=float)
        if not np.all(np.isfinite(arr)):
            raise ValueError("increments must be finite")
        object.__setattr__(self, "increments", arr)

    @property
    def n_steps(self):
        return len(self.increments)

    @property
    def times(self):
        """Left endpoints t_j of the increment intervals."""
        return self.t0 + self.dt * np.arange(self.n_steps)

    @property
    def t_end(self):
        return self.t0 + self.dt * self.n_steps

    def cumulative(self):
        """W_{t_j} - W_{t0} at the grid points t_0, ..., t_N (length N+1)."""
        return np.concatenate(([0.0], np.cumsum(self.increments)))


def sample_wiener(n_steps, dt, seed, t0=0.0):
    """n_steps iid Gaussian increments of variance dt."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if n_steps < 0:
        raise ValueError("n_steps must be >= 0")
    rng = as_rng(seed, "wiener")
    return WienerIncrements(t0=t0, dt=dt,
                            increments=rng.normal(0.0, np.sqrt(dt), size=n_steps))


def _eval_on_grid(f, times):
    try:
        vals = np.asarray(f(times), dtype=float)
        if vals.shape == times.shape:
            return vals
    except Exception:
        pass
    return np.array([float(f(t)) for t in times])


def ito_integral(f, W):
    """Left-point Ito sum: sum_j f(t_j) dW_{t_j}."""
    if W.n_steps == 0:
        return 0.0
    return float(_eval_on_grid(f, W.times) @ W.increments)


def double_ito_integral(k, W):
    """Double Ito sum: sum_{j,j'} k(t_j, t_{j'}) dW_{t_j} dW_{t_{j'}}."""
    if W.n_steps == 0:
        return 0.0
    t = W.times
    kernel = np.asarray(k(t[:, None], t[None, :]), dtype=float)
    if kernel.shape != (W.n_steps, W.n_steps):
        kernel = np.array([[float(k(a, b)) for b in t] for a in t])
    return float(W.increments @ kernel @ W.increments)


# ---------------------------------------------------------------------------
# Spacetime white noise on a 4D lattice
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SpacetimeLattice:
    """Uniform lattice on [-T, T) x (periodic box of side L)^3."""
    Nt: int
    Nx: int
    Ny: int
    Nz: int
    T: float
    L: float

    def __post_init__(self):
        if min(self.Nt, self.Nx, self.Ny, self.Nz) < 1:
            raise ValueError("all lattice counts must be >= 1")
        if self.T <= 0 or self.L <= 0:
            raise ValueError("T and L must be positive")

    @property
    def shape(self):
        return (self.Nt, self.Nx, self.Ny, self.Nz)

    @property
    def n_sites(self):
        return self.Nt * self.Nx * self.Ny * self.Nz

    @property
    def dt(self):
        return 2.0 * self.T / self.Nt

    @property
    def V(self):
        return self.L ** 3

    @property
    def d3x(self):
        return self.V / (self.Nx * self.Ny * self.Nz)

    @property
    def d4x(self):
        return self.dt * self.d3x

    @property
    def t_coords(self):
        return -self.T + self.dt * np.arange(self.Nt)

    def x_coords(self, axis):
        n = (self.Nx, self.Ny, self.Nz)[axis]
        return (self.L / n) * np.arange(n)

    @property
    def dp0(self):
        return np.pi / self.T

    @property
    def p0_coords(self):
        """Lattice frequencies in FFT order, spacing pi/T."""
        return 2.0 * np.pi * np.fft.fftfreq(self.Nt, d=self.dt)

    def p_coords(self, axis):
        n = (self.Nx, self.Ny, self.Nz)[axis]
        return 2.0 * np.pi * np.fft.fftfreq(n, d=self.L / n)


@dataclass(frozen=True)
class SpacetimeNoise:
    """One Gaussian increment dW(x) of variance d4x per lattice site."""
    lattice: SpacetimeLattice
    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=float)
        if arr.shape != self.lattice.shape:
            raise ValueError("values shape must match lattice shape")
        object.__setattr__(self, "values", arr)

    def site_power(self):
        """sum_x dW(x)^2 / d4x (the position-space side of Parseval)."""
        return float(np.sum(self.values ** 2) / self.lattice.d4x)


def sample_spacetime_noise(lattice, seed):
    rng = as_rng(seed, "spacetime")
    vals = rng.normal(0.0, np.sqrt(lattice.d4x), size=lattice.shape)
    return SpacetimeNoise(lattice=lattice, values=vals)


def coarse_grain(noise, factor):
    """Block-sum the field onto a lattice coarser by `factor` along each axis."""
    if factor < 1:
        raise ValueError("factor must be >= 1")
    lat = noise.lattice
    for n in lat.shape:
        if n % factor != 0:
            raise ValueError("lattice dimensions must be divisible by factor")
    if factor == 1:
        return noise
    coarse = SpacetimeLattice(Nt=lat.Nt // factor, Nx=lat.Nx // factor,
                              Ny=lat.Ny // factor, Nz=lat.Nz // factor,
                              T=lat.T, L=lat.L)
    v = noise.values.reshape(coarse.Nt, factor, coarse.Nx, factor,
                             coarse.Ny, factor, coarse.Nz, factor)
    return SpacetimeNoise(lattice=coarse, values=v.sum(axis=(1, 3, 5, 7)))


# ---------------------------------------------------------------------------
# Momentum-space noise modes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NoiseModes:
    """Complex noise amplitudes W(p).

    kind == "lattice4d": w is a 4D array over the full reciprocal lattice of
    `lattice`, indexed in FFT order, with exact Hermitian symmetry.
    kind == "onshell": w is a 1D array of W(E_p, p) over grid.modes.
    """
    kind: str
    w: np.ndarray
    lattice: SpacetimeLattice | None = None
    grid: object = None
    T: float | None = None

    @property
    def d4p(self):
        if self.kind != "lattice4d":
            raise ValueError("d4p defined only for lattice4d modes")
        lat = self.lattice
        return lat.dp0 * (2.0 * np.pi) ** 3 / lat.V

    def mode_power(self):
        """sum_p |W(p)|^2 d4p / (2 pi)^4 (momentum-space side of Parseval)."""
        if self.kind != "lattice4d":
            raise ValueError("mode_power defined only for lattice4d modes")
        return float(np.sum(np.abs(self.w) ** 2) * self.d4p / (2.0 * np.pi) ** 4)

    def conjugate_reflected(self):
        """conj(W(-p)) on the reciprocal lattice; equals w by Hermitian symmetry."""
        out = np.conj(self.w)
        for ax in range(4):
            out = np.flip(out, axis=ax)
            out = np.roll(out, 1, axis=ax)
        return out


def _axis_phase(coords, freqs, sign):
    # matrix M[a, i] = exp(sign * i * freqs[a] * coords[i])
    return np.exp(1j * sign * np.outer(freqs, coords))


def fourier_modes(noise):
    """W(p) = sum_x dW(x) exp{i(p.x - p0 t)} over the full reciprocal lattice."""
    lat = noise.lattice
    w = noise.values.astype(complex)
    mats = [_axis_phase(lat.t_coords, lat.p0_coords, -1.0),
            _axis_phase(lat.x_coords(0), lat.p_coords(0), +1.0),
            _axis_phase(lat.x_coords(1), lat.p_coords(1), +1.0),
            _axis_phase(lat.x_coords(2), lat.p_coords(2), +1.0)]
    for ax, mat in enumerate(mats):
        w = np.moveaxis(np.tensordot(mat, w, axes=(1, ax)), 0, ax)
    modes = NoiseModes(kind="lattice4d", w=w, lattice=lat, T=lat.T)
    # symmetrize so W(-p) = conj(W(p)) holds exactly, not just to roundoff
    sym = 0.5 * (w + modes.conjugate_reflected())
    return NoiseModes(kind="lattice4d", w=sym, lattice=lat, T=lat.T)


def sample_onshell_modes(grid, T, seed):
    """Directly sample W(E_p, p) per spatial mode: Re/Im iid N(0, TV)."""
    if T <= 0:
        raise ValueError("T must be positive")
    rng = as_rng(seed, "onshell")
    tv = T * grid.V
    n = len(grid.modes)
    re = rng.normal(0.0, np.sqrt(tv), size=n)
    im = rng.normal(0.0, np.sqrt(tv), size=n)
    return NoiseModes(kind="onshell", w=re + 1j * im, grid=grid, T=T)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def save_noise(noise, path):
    """Flat binary layout: magic, version, dims, T, L, row-major float64 LE."""
    lat = noise.lattice
    header = _MAGIC + struct.pack("<I4Idd", _VERSION, lat.Nt, lat.Nx,
                                  lat.Ny, lat.Nz, lat.T, lat.L)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(noise.values.astype("<f8").tobytes(order="C"))


def load_noise(path):
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _MAGIC:
            raise ValueError("not a noise-field file")
        version, nt, nx, ny, nz, t, box = struct.unpack("<I4Idd", fh.read(36))
        if version != _VERSION:
            raise ValueError(f"unsupported version {version}")
        lat = SpacetimeLattice(Nt=nt, Nx=nx, Ny=ny, Nz=nz, T=t, L=box)
        vals = np.frombuffer(fh.read(), dtype="<f8").reshape(lat.shape)
    return SpacetimeNoise(lattice=lat, values=vals.copy())


def noise_to_json(noise):
    lat = noise.lattice
    return json.dumps({
        "lattice": {"Nt": lat.Nt, "Nx": lat.Nx, "Ny": lat.Ny, "Nz": lat.Nz,
                    "T": lat.T, "L": lat.L},
        "values": noise.values.ravel(order="C").tolist(),
    })


def noise_from_json(text):
    data = json.loads(text)
    lat = SpacetimeLattice(**data["lattice"])
    vals = np.array(data["values"], dtype=float).reshape(lat.shape)
    return SpacetimeNoise(lattice=lat, values=vals)
