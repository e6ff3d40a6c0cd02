"""Noise-driven harmonic oscillator: stochastic Schrodinger integration,
Lindblad reference solution, and exact path-integral results.

The state obeys (hbar = 1)

    d|psi> = -i dt (p^2/2m + m w^2 x^2 / 2)|psi> + i lam dW x|psi>
             - (lam^2/2) dt x^2 |psi>,

equivalently a per-step exact unitary exp{-i[(H) dt - lam x dW]}.  Averaging
the pure-state projectors over noise paths gives the Lindblad equation

    drho/dt = -i[H, rho] + lam^2 (x rho x - x^2 rho/2 - rho x^2/2).

For the free case (w = 0) the path integral gives closed forms: the stationary
path, the classical action, and the Gaussian-packet width/center laws used
here as per-path oracles.
"""
from dataclasses import dataclass

import numpy as np
from scipy.linalg import dft

from .noise import WienerIncrements, ito_integral, double_ito_integral


class ResolutionError(ValueError):
    """Raised when the spatial grid cannot represent the state."""


class StepSizeError(ValueError):
    """Raised when the Lindblad integrator drifts out of tolerance."""


@dataclass(frozen=True)
class OscillatorParams:
    m: float
    omega: float
    lam: float

    def __post_init__(self):
        if self.m <= 0:
            raise ValueError("mass must be positive")
        if self.omega < 0 or self.lam < 0:
            raise ValueError("omega and lam must be nonnegative")


@dataclass(frozen=True)
class GaussianPacket:
    q0: float
    p0: float
    sigma0: float

    def __post_init__(self):
        if self.sigma0 <= 0:
            raise ValueError("sigma0 must be positive")


@dataclass(frozen=True)
class PacketEvolution:
    sigma: float
    q: float
    p1: float


@dataclass
class GridWavefunction:
    """Complex amplitudes on a uniform periodic x-grid."""
    x: np.ndarray
    psi: np.ndarray

    @property
    def dx(self):
        return self.x[1] - self.x[0]

    def norm(self):
        return float(np.sum(np.abs(self.psi) ** 2) * self.dx)

    def normalized(self):
        return GridWavefunction(self.x, self.psi / np.sqrt(self.norm()))

    def center(self):
        return float(np.sum(self.x * np.abs(self.psi) ** 2) * self.dx / self.norm())

    def width(self):
        """Standard deviation of |psi|^2."""
        c = self.center()
        var = np.sum((self.x - c) ** 2 * np.abs(self.psi) ** 2) * self.dx / self.norm()
        return float(np.sqrt(var))

    def spectral_tail_mass(self, fraction=0.1):
        """Probability mass in the top `fraction` of |k| (aliasing monitor)."""
        k = np.fft.fftfreq(len(self.x), d=self.dx) * 2 * np.pi
        amp2 = np.abs(np.fft.fft(self.psi)) ** 2
        cut = (1.0 - fraction) * np.max(np.abs(k))
        return float(amp2[np.abs(k) >= cut].sum() / amp2.sum())


def make_grid(x_min, x_max, n):
    return np.linspace(x_min, x_max, n, endpoint=False)


def gaussian_packet_wavefunction(x, packet):
    """psi0 ~ exp[-(x-q0)^2/(2 sigma0^2) + i p0 x], grid-normalized.

    With this convention |psi0|^2 has standard deviation sigma0/sqrt(2).
    """
    psi = np.exp(-(x - packet.q0) ** 2 / (2 * packet.sigma0 ** 2)
                 + 1j * packet.p0 * x)
    gw = GridWavefunction(np.asarray(x, dtype=float), psi.astype(complex))
    return gw.normalized()


# ---------------------------------------------------------------------------
# Stochastic Schrodinger equation (split-step spectral integrator)
# ---------------------------------------------------------------------------

def _split_step_operators(x, params, dt):
    k = np.fft.fftfreq(len(x), d=x[1] - x[0]) * 2 * np.pi
    exp_kin_half = np.exp(-0.5j * (k ** 2 / (2 * params.m)) * dt)
    v = 0.5 * params.m * params.omega ** 2 * x ** 2
    return exp_kin_half, v


def evolve_sde(psi0, params, W, save_every=1, check_resolution=True,
               include_hamiltonian=True):
    """Integrate the stochastic Schrodinger equation along one noise path.

    Each step applies the exact unitary exp{-i[H dt - lam x dW]} by symmetric
    splitting: kinetic half-step in momentum space, potential+noise phase in
    position space, kinetic half-step.  Returns the list of saved frames
    (including the initial one).
    """
    if check_resolution and psi0.spectral_tail_mass() > 1e-6:
        raise ResolutionError("grid too coarse: spectral tail mass > 1e-6")
    x = psi0.x
    dt = W.dt
    exp_kin_half, v = _split_step_operators(x, params, dt)
    if not include_hamiltonian:
        exp_kin_half = np.ones_like(exp_kin_half)
        v = np.zeros_like(v)
    psi = psi0.psi.copy()
    frames = [GridWavefunction(x, psi.copy())]
    for dw in W.increments:
        phase = np.exp(-1j * (v * dt - params.lam * x * dw))
        psi = np.fft.ifft(exp_kin_half * np.fft.fft(psi))
        psi = phase * psi
        psi = np.fft.ifft(exp_kin_half * np.fft.fft(psi))
        frames.append(GridWavefunction(x, psi.copy()))
    if save_every > 1:
        keep = frames[::save_every]
        if (len(frames) - 1) % save_every != 0:
            keep.append(frames[-1])
        frames = keep
    return frames


def evolve_sde_ensemble(psi0, params, dws, dt):
    """Evolve a batch of paths at once; dws has shape (n_paths, n_steps).

    Returns the final wavefunctions as an (n_paths, n_grid) array.  Used by
    the Monte Carlo unravelling checks, where per-step frames are not needed.
    """
    if psi0.spectral_tail_mass() > 1e-6:
        raise ResolutionError("grid too coarse: spectral tail mass > 1e-6")
    x = psi0.x
    n_paths, n_steps = dws.shape
    exp_kin_half, v = _split_step_operators(x, params, dt)
    psi = np.tile(psi0.psi, (n_paths, 1))
    for j in range(n_steps):
        psi = np.fft.ifft(exp_kin_half[None, :] * np.fft.fft(psi, axis=1), axis=1)
        psi *= np.exp(-1j * (v[None, :] * dt - params.lam * np.outer(dws[:, j], x)))
        psi = np.fft.ifft(exp_kin_half[None, :] * np.fft.fft(psi, axis=1), axis=1)
    return psi


def sde_mean_projector(psi0, params, dws, dt):
    """Average of |psi><psi| over the paths encoded in dws (n_paths, n_steps)."""
    psi = evolve_sde_ensemble(psi0, params, dws, dt)
    # mean outer product in the grid-weighted density-matrix convention
    rho = (psi.T @ psi.conj()) / psi.shape[0]
    return GridDensityMatrix(psi0.x, rho * psi0.dx)


# ---------------------------------------------------------------------------
# Lindblad master equation
# ---------------------------------------------------------------------------

@dataclass
class GridDensityMatrix:
    x: np.ndarray
    rho: np.ndarray  # rho[i, j] = <x_i| rho |x_j> * dx (grid-weighted)

    @property
    def dx(self):
        return self.x[1] - self.x[0]

    def trace(self):
        return float(np.trace(self.rho).real)

    def hermiticity_defect(self):
        return float(np.max(np.abs(self.rho - self.rho.conj().T)))

    def min_eigenvalue(self):
        return float(np.linalg.eigvalsh(0.5 * (self.rho + self.rho.conj().T)).min())

    def purity(self):
        return float(np.trace(self.rho @ self.rho).real)


def density_from_wavefunction(gw):
    psi = gw.normalized().psi
    return GridDensityMatrix(gw.x, np.outer(psi, psi.conj()) * gw.dx)


def hamiltonian_matrix(x, params):
    """Dense H on the periodic grid: spectral kinetic term plus potential."""
    n = len(x)
    dx = x[1] - x[0]
    k = np.fft.fftfreq(n, d=dx) * 2 * np.pi
    f = dft(n) / np.sqrt(n)  # unitary DFT, convention matching np.fft.fft
    kin = f.conj().T @ (np.diag(k ** 2 / (2 * params.m)) @ f)
    pot = np.diag(0.5 * params.m * params.omega ** 2 * x ** 2)
    return kin + pot


def evolve_lindblad(rho0, params, t, n_steps=400, include_hamiltonian=True):
    """Fixed-step 4th-order integration of the Lindblad equation.

    Trace is projected back to its initial value each step; positivity drift
    beyond 1e-6 raises StepSizeError.
    """
    x = rho0.x
    lam = params.lam
    xdiag = x
    x2 = x ** 2
    if include_hamiltonian:
        h = hamiltonian_matrix(x, params)
    else:
        h = np.zeros((len(x), len(x)), dtype=complex)

    def rhs(r):
        comm = h @ r - r @ h
        deco = (xdiag[:, None] * r * xdiag[None, :]
                - 0.5 * (x2[:, None] + x2[None, :]) * r)
        return -1j * comm + lam ** 2 * deco

    r = rho0.rho.astype(complex).copy()
    tr0 = np.trace(r).real
    dt = t / n_steps
    for _ in range(n_steps):
        k1 = rhs(r)
        k2 = rhs(r + 0.5 * dt * k1)
        k3 = rhs(r + 0.5 * dt * k2)
        k4 = rhs(r + dt * k3)
        r = r + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        r *= tr0 / np.trace(r).real
    out = GridDensityMatrix(x, r)
    if out.min_eigenvalue() < -1e-6:
        raise StepSizeError("positivity drift beyond tolerance; reduce step")
    return out


def decoherence_factor(x, y, t, lam):
    """Off-diagonal damping of the H-free Lindblad solution."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    return float(np.exp(-0.5 * lam ** 2 * (x - y) ** 2 * t))


# ---------------------------------------------------------------------------
# Path-integral closed forms (free case)
# ---------------------------------------------------------------------------

def tridiagonal_det(n):
    """Determinant of the (n-1)x(n-1) tridiagonal matrix with 2 on the
    diagonal and -1 off it; equals n.  Computed by the exact integer
    recurrence D_k = 2 D_{k-1} - D_{k-2}."""
    if n < 1:
        raise ValueError("n must be >= 1")
    d_prev, d = 0, 1  # D_{-1} = 0, D_0 = 1 (empty matrix), D_k = k + 1
    for _ in range(n - 1):
        d_prev, d = d, 2 * d - d_prev
    return d


def tridiagonal_inverse_entry(n, j, jp):
    """Closed-form inverse entry (1/n)[n*min(j,j') - j*j'], 1 <= j,j' <= n-1."""
    if not (1 <= j <= n - 1 and 1 <= jp <= n - 1):
        raise IndexError("indices must lie in 1..n-1")
    return (n * min(j, jp) - j * jp) / n


def tridiagonal_matrix(n):
    """Dense (n-1)x(n-1) matrix A for oracle comparisons."""
    a = 2.0 * np.eye(n - 1)
    a -= np.diag(np.ones(n - 2), 1)
    a -= np.diag(np.ones(n - 2), -1)
    return a


def discrete_action(path, W, m, lam, omega=0.0):
    """Time-sliced action: sum_j [m((x_{j+1}-x_j)/dt)^2/2 - m w^2 x_j^2/2] dt
    + lam x_j dW_{t_j}, with path = (x_0, ..., x_N)."""
    path = np.asarray(path, dtype=float)
    dt = W.dt
    if len(path) != W.n_steps + 1:
        raise ValueError("path must have n_steps + 1 points")
    kin = 0.5 * m * np.sum((np.diff(path) / dt) ** 2) * dt
    pot = -0.5 * m * omega ** 2 * np.sum(path[:-1] ** 2) * dt
    noise = lam * float(path[:-1] @ W.increments)
    return kin + pot + noise


def stationary_path(x0, x1, t0, t1, W, params):
    """Stationary (classical) path of the free noisy action on the W grid.

    Straight line between the endpoints plus the noise response through the
    inverse-tridiagonal kernel min(j,j') - j j'/n.
    """
    if params.omega != 0.0:
        raise ValueError("stationary path implemented for the free case only")
    n = W.n_steps
    if n < 1:
        raise ValueError("need at least one step")
    if abs(W.t0 - t0) > 1e-12 or abs(W.t_end - t1) > 1e-12:
        raise ValueError("W grid must span [t0, t1]")
    j = np.arange(n + 1)
    line = ((n - j) * x0 + j * x1) / n
    jp = np.arange(1, n)  # interior increment indices
    kernel = np.minimum(j[:, None], jp[None, :]) - np.outer(j, jp) / n
    response = (params.lam * W.dt / params.m) * (kernel @ W.increments[1:n])
    return line - response


def classical_action_free(x0, x1, t0, t1, W, m, lam):
    """Action at the stationary path: ballistic term, a single Ito integral
    with linear-in-t weight, and a double Ito integral with the
    [t1 - max][min - t0]/(t1 - t0) kernel."""
    if t1 <= t0:
        raise ValueError("t1 must exceed t0")
    tau = t1 - t0
    ballistic = 0.5 * m * (x1 - x0) ** 2 / tau
    single = lam * ito_integral(
        lambda t: (x0 * (t1 - t) + x1 * (t - t0)) / tau, W)
    double = -(lam ** 2 / (2 * m)) * double_ito_integral(
        lambda a, b: (t1 - np.maximum(a, b)) * (np.minimum(a, b) - t0) / tau, W)
    return ballistic + single + double


def free_propagator_prefactor(m, tau):
    """sqrt(m/(2 pi i tau)) on the principal branch (phase e^{-i pi/4})."""
    return np.sqrt(m / (2 * np.pi * tau)) * np.exp(-0.25j * np.pi)


def evolve_packet_exact(packet, t1, W, params):
    """Exact width/center of a free Gaussian packet along one noise path.

    sigma(t') = sigma0 sqrt(1 + tau^2/(m^2 sigma0^4)); the center moves at
    velocity (p0 + p1)/m where p1 is the accumulated noise momentum.
    """
    if params.omega != 0.0:
        raise ValueError("closed form available for the free case only")
    t0 = W.t0
    tau = t1 - t0
    if tau < 0:
        raise ValueError("t1 must be >= t0")
    if tau == 0:
        return PacketEvolution(sigma=packet.sigma0, q=packet.q0, p1=0.0)
    if abs(W.t_end - t1) > 1e-12:
        raise ValueError("W grid must span [t0, t1]")
    p1 = params.lam * ito_integral(lambda t: 1.0 - (t - t0) / tau, W)
    sigma = packet.sigma0 * np.sqrt(
        1.0 + tau ** 2 / (params.m ** 2 * packet.sigma0 ** 4))
    q = packet.q0 + (packet.p0 + p1) * tau / params.m
    return PacketEvolution(sigma=float(sigma), q=float(q), p1=float(p1))
