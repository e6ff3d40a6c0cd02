"""Free scalar field driven by spacetime white noise, on a finite momentum grid.

The random S-matrix is a functional of the on-shell noise amplitudes
W(E_p, p).  Per mode we form

    V_p = i lam W(E_p, p) / sqrt((2 pi)^3 2 E_p),
    gamma_p = d3p conj(V_p),        Etilde_p = E_p / (lam^2 T),

and the vacuum-persistence amplitude satisfies |S00|^2 = exp{-sum |V_p|^2 d3p}.
The evolved vacuum is a product of coherent states with normalized-mode
amplitudes alpha_p = -gamma_p / sqrt(d3p); averaging projectors over noise
draws gives diagonal density matrices with geometric per-mode occupancy of
ratio 1/(1 + Etilde_p) and the partition function Z = prod (1+Etilde)/Etilde.

Renormalization trades the bare coupling lam for lam_p via lam = lam_p m / L
at cutoff L, under which ln Z -> T V m^2 lam_p^2 / (4 pi^2) and the vacuum
particle number becomes Poisson.

Dirac deltas are represented on the grid as Kronecker deltas scaled by the
cell volumes: delta3(0) -> 1/d3p, delta4(0) -> 2TV/(2 pi)^4.
"""
import itertools
from dataclasses import dataclass, field
from math import factorial

import numpy as np
from scipy.integrate import quad
from scipy.linalg import expm

from . import noise as noise_mod
from .fock import FockBasis, Truncation, check_truncation, vector_norm_sq

CUTOFF_LADDER = (10.0, 30.0, 100.0, 300.0)


# ---------------------------------------------------------------------------
# Momentum grid and on-shell coupling
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MomentumGrid:
    """Box momenta p = 2 pi n / L inside |p| <= cutoff, with dispersion E_p."""
    L: float
    m: float
    T: float
    cutoff: float
    modes: np.ndarray = field(default=None)  # (M, 3) momenta

    def __post_init__(self):
        if self.L <= 0 or self.m <= 0 or self.T <= 0:
            raise ValueError("L, m, and T must be positive")
        if self.modes is None:
            base = 2.0 * np.pi / self.L
            nmax = int(np.floor(self.cutoff / base)) if self.cutoff > 0 else 0
            pts = []
            for n in itertools.product(range(-nmax, nmax + 1), repeat=3):
                p = base * np.array(n, dtype=float)
                if np.linalg.norm(p) <= self.cutoff + 1e-12:
                    pts.append(p)
            pts.sort(key=lambda q: (np.linalg.norm(q), tuple(q)))
            object.__setattr__(self, "modes", np.array(pts).reshape(-1, 3))
        else:
            object.__setattr__(self, "modes",
                               np.asarray(self.modes, dtype=float).reshape(-1, 3))

    @classmethod
    def explicit(cls, L, m, T, momenta, cutoff=np.inf):
        """Grid restricted to a hand-picked list of modes (small test cases)."""
        return cls(L=L, m=m, T=T, cutoff=cutoff,
                   modes=np.asarray(momenta, dtype=float).reshape(-1, 3))

    @property
    def V(self):
        return self.L ** 3

    @property
    def d3p(self):
        return (2.0 * np.pi) ** 3 / self.V

    @property
    def dp0(self):
        return np.pi / self.T

    @property
    def d4p(self):
        return self.d3p * self.dp0

    @property
    def n_modes(self):
        return len(self.modes)

    @property
    def energies(self):
        return np.sqrt(self.m ** 2 + np.sum(self.modes ** 2, axis=1))

    def mode_index(self, p):
        p = np.asarray(p, dtype=float)
        hits = np.where(np.all(np.abs(self.modes - p) < 1e-9, axis=1))[0]
        if len(hits) != 1:
            raise KeyError(f"momentum {p} not on grid")
        return int(hits[0])


@dataclass(frozen=True)
class OnShellCoupling:
    grid: MomentumGrid
    lam: float
    T: float
    v: np.ndarray        # V_p per mode
    gamma: np.ndarray    # d3p * conj(V_p)
    etilde: np.ndarray   # E_p / (lam^2 T)


def etilde_values(grid, lam, T):
    if lam == 0.0:
        return np.full(grid.n_modes, np.inf)
    return grid.energies / (lam ** 2 * T)


def coupling_from_modes(modes, lam, grid):
    """Per-mode V_p = i lam W(E_p,p)/sqrt((2 pi)^3 2 E_p) with derived gamma, Etilde."""
    if modes.kind != "onshell" or modes.grid is not grid:
        raise ValueError("modes must be on-shell samples for this grid")
    e = grid.energies
    v = 1j * lam * modes.w / np.sqrt((2.0 * np.pi) ** 3 * 2.0 * e)
    gamma = grid.d3p * np.conj(v)
    return OnShellCoupling(grid=grid, lam=lam, T=modes.T, v=v, gamma=gamma,
                           etilde=etilde_values(grid, lam, modes.T))


# ---------------------------------------------------------------------------
# Propagator and vacuum-persistence amplitude
# ---------------------------------------------------------------------------

def feynman_propagator(p, m, eta):
    """1/(p^2 + m^2 - i eta) with metric (-,+,+,+); p = (p0, px, py, pz)."""
    if eta <= 0:
        raise ValueError("eta must be positive")
    p = np.asarray(p, dtype=float)
    psq = -p[..., 0] ** 2 + np.sum(p[..., 1:] ** 2, axis=-1)
    return 1.0 / (psq + m ** 2 - 1j * eta)


def propagator_position_4d(lattice, m, dx4, eta=None, chunk=4096):
    """G(x,x') as the 4D reciprocal-lattice sum of the momentum-space form.

    The frequency axis is processed in chunks so very fine time lattices
    (needed for the sum to approach its continuum limit) stay in memory.
    """
    if eta is None:
        eta = lattice.dp0
    p0 = lattice.p0_coords
    dt, dx, dy, dz = dx4
    p1 = lattice.p_coords(0)
    p2 = lattice.p_coords(1)
    p3 = lattice.p_coords(2)
    px, py, pz = np.meshgrid(p1, p2, p3, indexing="ij")
    px, py, pz = px.ravel(), py.ravel(), pz.ravel()
    esq = m ** 2 + px ** 2 + py ** 2 + pz ** 2
    ph3 = np.exp(1j * (px * dx + py * dy + pz * dz))
    total = 0.0 + 0.0j
    for lo in range(0, len(p0), chunk):
        w = p0[lo:lo + chunk]
        block = np.exp(-1j * w * dt)[:, None] \
            / (esq[None, :] - (w ** 2)[:, None] - 1j * eta)
        total += np.sum(block @ ph3)
    d4p = lattice.dp0 * (2.0 * np.pi) ** 3 / lattice.V
    return complex(total * d4p / (2.0 * np.pi) ** 4)


def propagator_position_3d(lattice, m, dx4):
    """G(x,x') from the on-shell 3D sum: i/(2 pi)^3 sum d3p e^{ip.dx - iE|dt|}/(2E)."""
    dt, dx, dy, dz = dx4
    p1 = lattice.p_coords(0)
    p2 = lattice.p_coords(1)
    p3 = lattice.p_coords(2)
    px, py, pz = np.meshgrid(p1, p2, p3, indexing="ij")
    e = np.sqrt(m ** 2 + px ** 2 + py ** 2 + pz ** 2)
    ph = np.exp(1j * (px * dx + py * dy + pz * dz) - 1j * e * abs(dt))
    d3p = (2.0 * np.pi) ** 3 / lattice.V
    return complex(1j * np.sum(ph / (2.0 * e)) * d3p / (2.0 * np.pi) ** 3)


def s00_modulus_sq(coupling):
    """|S00|^2 = exp{-sum_p |V_p|^2 d3p}."""
    return float(np.exp(-np.sum(np.abs(coupling.v) ** 2) * coupling.grid.d3p))


def s00_full(modes4d, lam, m, eta=None):
    """Vacuum-persistence amplitude from a full 4D noise-mode set."""
    if modes4d.kind != "lattice4d":
        raise ValueError("s00_full needs 4D lattice modes")
    w = modes4d.w
    if not np.allclose(w, modes4d.conjugate_reflected()):
        raise ValueError("missing conjugate modes: Hermitian symmetry violated")
    lat = modes4d.lattice
    if eta is None:
        eta = lat.dp0
    p0 = lat.p0_coords
    p1 = lat.p_coords(0)
    p2 = lat.p_coords(1)
    p3 = lat.p_coords(2)
    psq = (-p0[:, None, None, None] ** 2 + p1[None, :, None, None] ** 2
           + p2[None, None, :, None] ** 2 + p3[None, None, None, :] ** 2)
    g = 1.0 / (psq + m ** 2 - 1j * eta)
    exponent = 0.5j * lam ** 2 * np.sum(np.abs(w) ** 2 * g) \
        * modes4d.d4p / (2.0 * np.pi) ** 4
    return complex(np.exp(exponent))


def onshell_restriction(modes4d, grid):
    """W at (nearest lattice frequency to E_p, p) for each grid mode.

    Snapping E_p to the frequency grid is the lattice reading of the on-shell
    Kronecker delta; it converges to the true on-shell value as the time
    resolution refines.
    """
    lat = modes4d.lattice
    p0 = lat.p0_coords
    out = np.empty(grid.n_modes, dtype=complex)
    for i, (p, e) in enumerate(zip(grid.modes, grid.energies)):
        it = int(np.argmin(np.abs(p0 - e)))
        ix = int(np.argmin(np.abs(lat.p_coords(0) - p[0])))
        iy = int(np.argmin(np.abs(lat.p_coords(1) - p[1])))
        iz = int(np.argmin(np.abs(lat.p_coords(2) - p[2])))
        out[i] = modes4d.w[it, ix, iy, iz]
    return noise_mod.NoiseModes(kind="onshell", w=out, grid=grid, T=lat.T)


def s_matrix_free(p_in, p_out, coupling, s00):
    """S_{p',p} = S00 {delta3(p-p') - V_p conj(V_{p'})}, delta3 as Kronecker/d3p."""
    grid = coupling.grid
    i = grid.mode_index(p_in)
    j = grid.mode_index(p_out)
    delta = (1.0 / grid.d3p) if i == j else 0.0
    return s00 * (delta - coupling.v[i] * np.conj(coupling.v[j]))


# ---------------------------------------------------------------------------
# Final states
# ---------------------------------------------------------------------------

def final_state_vacuum(coupling, s00_mod_sq=None):
    """Normalized-mode coherent amplitudes alpha_p = -gamma_p/sqrt(d3p).

    Returns (alphas, norm) where norm is |S00|^2 exp{sum |gamma|^2/d3p},
    equal to 1 by the unitarity identity.
    """
    d3p = coupling.grid.d3p
    alphas = -coupling.gamma / np.sqrt(d3p)
    if s00_mod_sq is None:
        s00_mod_sq = s00_modulus_sq(coupling)
    norm = s00_mod_sq * np.exp(np.sum(np.abs(coupling.gamma) ** 2) / d3p)
    return alphas, float(norm)


def final_state_particles(initial_modes, coupling, truncation=Truncation()):
    """Truncated Fock vector for an initial occupation list of grid modes.

    initial_modes is a list of mode indices (repeats allowed).  The evolved
    state is prod_p (a_dag_p + v_p)^{m_p} / sqrt(m_p!) applied to the evolved
    vacuum, with v_p = sqrt(d3p) V_p the unit-normalized mode coupling.
    """
    grid = coupling.grid
    basis = FockBasis(grid.n_modes, truncation)
    alphas, _ = final_state_vacuum(coupling)
    vec = basis.coherent_vector(alphas)
    counts = np.zeros(grid.n_modes, dtype=int)
    for idx in initial_modes:
        counts[int(idx)] += 1
    vsmall = np.sqrt(grid.d3p) * coupling.v
    for mode, mult in enumerate(counts):
        if mult == 0:
            continue
        op = basis.create(mode) + vsmall[mode] * np.eye(basis.size)
        for _ in range(mult):
            vec = op @ vec
        vec = vec / np.sqrt(float(factorial(mult)))
    lost = 1.0 - vector_norm_sq(vec)
    check_truncation(lost, truncation.mass_bound, "final_state_particles")
    return basis, vec


# ---------------------------------------------------------------------------
# Gaussian pairing expectations
# ---------------------------------------------------------------------------

def partition_function_discrete(grid, lam, T):
    """Z = prod_p (1 + Etilde_p)/Etilde_p over the grid modes."""
    et = etilde_values(grid, lam, T)
    if np.any(np.isinf(et)):
        return 1.0
    return float(np.prod((1.0 + et) / et))


def pairing_expectation(v_modes, vstar_modes, grid, lam, T):
    """E[|S00|^2 prod V_{p_j} prod conj(V_{p'_l})] by permutation pairing.

    Arguments are lists of mode indices.  Zero when the counts differ;
    otherwise (1/Z) prod 1/(1+Etilde) times the permanent of the
    delta3(p_j - p'_pi_j) assignment matrix (Kronecker/d3p).
    """
    z = partition_function_discrete(grid, lam, T)
    if len(v_modes) != len(vstar_modes):
        return 0.0
    n = len(v_modes)
    if n == 0:
        return 1.0 / z
    et = etilde_values(grid, lam, T)
    total = 0.0
    for perm in itertools.permutations(range(n)):
        term = 1.0
        for j in range(n):
            a, b = v_modes[j], vstar_modes[perm[j]]
            if a != b:
                term = 0.0
                break
            term *= 1.0 / ((1.0 + et[a]) * grid.d3p)
        total += term
    return total / z


# ---------------------------------------------------------------------------
# Density matrices in the truncated Fock basis
# ---------------------------------------------------------------------------

@dataclass
class FockDensityMatrix:
    grid: MomentumGrid
    basis: FockBasis
    matrix: np.ndarray
    truncated_mass: float

    def trace(self):
        return float(np.trace(self.matrix).real)

    def hermiticity_defect(self):
        return float(np.max(np.abs(self.matrix - self.matrix.conj().T)))

    def diagonal(self):
        return np.diag(self.matrix).real.copy()

    def mode_marginal(self, mode, n_values):
        """P(n) marginal of one mode from the diagonal weights."""
        diag = self.diagonal()
        out = np.zeros(len(n_values))
        for i, s in enumerate(self.basis.states):
            for k, n in enumerate(n_values):
                if s[mode] == n:
                    out[k] += diag[i]
        return out


def equal_momentum_blocks_zero(fdm):
    """Max |entry| between basis states with different momentum multisets."""
    worst = 0.0
    states = fdm.basis.states
    for i, si in enumerate(states):
        for j, sj in enumerate(states):
            if si != sj:
                worst = max(worst, abs(fdm.matrix[i, j]))
    return worst


def density_vacuum(grid, lam, T, truncation=Truncation()):
    """Diagonal density matrix: weight (1/Z) prod_p (1+Etilde_p)^{-m_p}."""
    basis = FockBasis(grid.n_modes, truncation)
    et = etilde_values(grid, lam, T)
    z = partition_function_discrete(grid, lam, T)
    q = 1.0 / (1.0 + et)
    diag = np.array([np.prod(q ** np.array(s)) for s in basis.states]) / z
    mat = np.diag(diag).astype(complex)
    lost = 1.0 - diag.sum()
    check_truncation(lost, truncation.mass_bound, "density_vacuum")
    return FockDensityMatrix(grid=grid, basis=basis, matrix=mat,
                             truncated_mass=float(lost))


def density_single(p_mode, grid, lam, T, truncation=Truncation()):
    """Initial single particle at mode p: vacuum weights reweighted by
    (1 + Etilde_p^2 m_p)/(1 + Etilde_p), normalized by 1/delta3(0)."""
    basis = FockBasis(grid.n_modes, truncation)
    et = etilde_values(grid, lam, T)
    z = partition_function_discrete(grid, lam, T)
    q = 1.0 / (1.0 + et)
    ep = et[p_mode]
    diag = []
    for s in basis.states:
        w = np.prod(q ** np.array(s)) / z
        w *= (1.0 + ep ** 2 * s[p_mode]) / (1.0 + ep)
        diag.append(w)
    diag = np.array(diag)
    mat = np.diag(diag).astype(complex)
    lost = 1.0 - diag.sum()
    check_truncation(lost, truncation.mass_bound, "density_single")
    return FockDensityMatrix(grid=grid, basis=basis, matrix=mat,
                             truncated_mass=float(lost))


def density_offdiagonal(p_mode, q_mode, grid, lam, T, truncation=Truncation()):
    """E[U |1_p><1_q| U^dag] in the unit-normalized mode basis:

        delta_{pq}/(1+Etilde_p) rho0
        + Etilde_p Etilde_q /((1+Etilde_p)(1+Etilde_q)) a_dag_p rho0 a_q.
    """
    rho0 = density_vacuum(grid, lam, T, truncation)
    basis = rho0.basis
    et = etilde_values(grid, lam, T)
    coeff = (et[p_mode] * et[q_mode]
             / ((1.0 + et[p_mode]) * (1.0 + et[q_mode])))
    adag = basis.create(p_mode)
    a_q = basis.destroy(q_mode)
    mat = coeff * (adag @ rho0.matrix @ a_q)
    if p_mode == q_mode:
        mat = mat + rho0.matrix / (1.0 + et[p_mode])
    return FockDensityMatrix(grid=grid, basis=basis, matrix=mat,
                             truncated_mass=rho0.truncated_mass)


def apply_free_phases(fdm, T):
    """Conjugate by the free phases e^{-i T E_p n_p}; the equal-momentum
    structure makes this the identity on every constructed density matrix."""
    e = fdm.grid.energies
    phases = np.array([np.exp(-1j * T * sum(n * e[k] for k, n in enumerate(s)))
                       for s in fdm.basis.states])
    u = np.diag(phases)
    return FockDensityMatrix(grid=fdm.grid, basis=fdm.basis,
                             matrix=u @ fdm.matrix @ u.conj().T,
                             truncated_mass=fdm.truncated_mass)


# ---------------------------------------------------------------------------
# Partition function, renormalization, particle statistics
# ---------------------------------------------------------------------------

def partition_function(grid, lam, T):
    """(discrete Z, continuum ln Z by adaptive quadrature at this cutoff)."""
    z_disc = partition_function_discrete(grid, lam, T)
    lnz = lnz_quadrature(lam, T, grid.V, grid.m, grid.cutoff)
    return z_disc, lnz


def lnz_quadrature(lam, T, V, m, cutoff):
    """ln Z = V/(2 pi^2) int_0^cutoff k^2 ln(1 + lam^2 T/sqrt(k^2+m^2)) dk."""
    if lam == 0.0:
        return 0.0
    val, _ = quad(lambda k: k ** 2 * np.log1p(lam ** 2 * T / np.sqrt(k ** 2 + m ** 2)),
                  0.0, cutoff, epsrel=1e-10, limit=200)
    return float(V / (2.0 * np.pi ** 2) * val)


@dataclass(frozen=True)
class RenormalizationScheme:
    """Physical coupling lam_p with bare lam = lam_p m / cutoff."""
    lam_p: float
    cutoff: float
    m: float

    def bare_lam(self, cutoff=None):
        c = self.cutoff if cutoff is None else cutoff
        return self.lam_p * self.m / c

    def at_cutoff(self, cutoff):
        return RenormalizationScheme(lam_p=self.lam_p, cutoff=cutoff, m=self.m)


@dataclass(frozen=True)
class PoissonLaw:
    mu: float

    def pmf(self, n):
        n = np.asarray(n)
        from scipy.stats import poisson
        return poisson.pmf(n, self.mu)


def poisson_mean(scheme, T, V):
    """mu = T V m^2 lam_p^2 / (4 pi^2)."""
    return T * V * scheme.m ** 2 * scheme.lam_p ** 2 / (4.0 * np.pi ** 2)


def renormalized_partition(scheme, T, V, ladder=CUTOFF_LADDER):
    """Limit value exp{T V m^2 lam_p^2/(4 pi^2)} plus the cutoff ladder ln Z(L)."""
    target = poisson_mean(scheme, T, V)
    rungs = []
    for ratio in ladder:
        cut = ratio * scheme.m
        lam = scheme.bare_lam(cut)
        rungs.append((ratio, lnz_quadrature(lam, T, V, scheme.m, cut)))
    return float(np.exp(target)), rungs


def vacuum_number_distribution(scheme, T, V, n_max=10, ladder=CUTOFF_LADDER):
    """PoissonLaw plus the cutoff sequence P0(n) at each ladder rung."""
    law = PoissonLaw(mu=poisson_mean(scheme, T, V))

    def p0_at_cutoff(cut):
        lam = scheme.bare_lam(cut)
        lam2t = lam ** 2 * T
        val, _ = quad(lambda k: k ** 2 / (1.0 + np.sqrt(k ** 2 + scheme.m ** 2) / lam2t),
                      0.0, cut, epsrel=1e-10, limit=200)
        mu_cut = V / (2.0 * np.pi ** 2) * val
        lnz = lnz_quadrature(lam, T, V, scheme.m, cut)
        n = np.arange(n_max + 1)
        logp = n * np.log(mu_cut) - lnz - np.array(
            [np.sum(np.log(np.arange(1, k + 1))) if k else 0.0 for k in n])
        return np.exp(logp)

    rungs = [(ratio, p0_at_cutoff(ratio * scheme.m)) for ratio in ladder]
    return law, rungs


def single_particle_number_distribution(j, n, scheme, T, V):
    """P_p(j, n) in the renormalized limit: P0(n-j) iff j == 1 and n >= 1."""
    if j == 1 and n >= 1:
        law = PoissonLaw(mu=poisson_mean(scheme, T, V))
        return float(law.pmf(n - 1))
    return 0.0


def generation_rates(scheme, grid):
    """Per-mode density rates dn_p/dt and the renormalized total dN/dt.

    dn_p/dt = lam_p^2 m^2 V / (2 (2 pi)^3 cutoff^2 E_p) inside the cutoff;
    the per-discrete-mode occupancy rate is d3p times this.  The total in the
    cutoff -> infinity limit is lam_p^2 m^2 V / (8 pi^2).
    """
    e = grid.energies
    inside = np.linalg.norm(grid.modes, axis=1) <= scheme.cutoff + 1e-12
    rates = np.where(
        inside,
        scheme.lam_p ** 2 * scheme.m ** 2 * grid.V
        / (2.0 * (2.0 * np.pi) ** 3 * scheme.cutoff ** 2 * e),
        0.0)
    total = scheme.lam_p ** 2 * scheme.m ** 2 * grid.V / (8.0 * np.pi ** 2)
    return rates, float(total)


def total_rate_riemann(scheme, V, n_bins=20000):
    """Midpoint Riemann sum of int d3p dn_p/dt over |p| <= cutoff."""
    cut = scheme.cutoff
    k = (np.arange(n_bins) + 0.5) * cut / n_bins
    e = np.sqrt(scheme.m ** 2 + k ** 2)
    integrand = 4.0 * np.pi * k ** 2 / e
    pref = scheme.lam_p ** 2 * scheme.m ** 2 * V / (2.0 * (2.0 * np.pi) ** 3 * cut ** 2)
    return float(pref * np.sum(integrand) * cut / n_bins)


def mode_sde_solution(initial, scheme, grid, wiener_pairs, t, truncation=Truncation()):
    """Hamiltonian-free mode-SDE solution: per-mode displacement of amplitude
    beta_p = c_p (W2 + i W1)/sqrt(2) with c_p = (lam_p m / cutoff)/sqrt(2 E_p).

    wiener_pairs is an (n_modes, 2) array of Wiener values (W1_t, W2_t) at
    time t.  initial is a vector in the truncated basis (or None for vacuum).
    """
    basis = FockBasis(grid.n_modes, truncation)
    vec = basis.vacuum_vector() if initial is None else np.asarray(initial, dtype=complex)
    if t == 0:
        return basis, vec.copy()
    c = scheme.bare_lam() / np.sqrt(2.0 * grid.energies)
    w = np.asarray(wiener_pairs, dtype=float)
    betas = c * (w[:, 1] + 1j * w[:, 0]) / np.sqrt(2.0)
    u = expm(basis.displacement_generator(betas))
    return basis, u @ vec
