"""Perturbative stochastic phi^4 on small 4D lattices.

Order-g S-matrix terms, the Gaussian pairing kernel e(p,q) for noise moments
of |S00|^2, the renormalized dot factors that vanish along the cutoff ladder,
and the collision density-matrix relations.

Lattice delta bookkeeping: every Dirac delta is a Kronecker delta over the
reciprocal lattice divided by the cell volume, delta4(0) = 2TV/(2 pi)^4.
"On-shell" on the lattice means |p0| equals the grid frequency nearest
E_p = sqrt(m^2 + |p|^2); energies entering Etilde in the pairing kernel are
snapped the same way so the Gaussian moment identity is exact at finite
resolution and recovers the continuum form as dp0 -> 0.
"""
import itertools
from dataclasses import dataclass
from math import factorial

import numpy as np

from . import freefield as ff

MAX_LATTICE_SITES = 8 ** 4


@dataclass(frozen=True)
class Phi4Config:
    g: float
    scheme: ff.RenormalizationScheme
    grid: ff.MomentumGrid
    eta: float

    def __post_init__(self):
        if self.eta <= 0:
            raise ValueError("eta must be positive")

    @property
    def lam(self):
        return self.scheme.bare_lam()


# ---------------------------------------------------------------------------
# Lattice on-shell bookkeeping and the pairing kernel
# ---------------------------------------------------------------------------

def snap_energy(e, dp0):
    """Nearest positive grid frequency k*dp0 to the energy e."""
    k = max(1, int(round(e / dp0)))
    return k * dp0


def snapped_etilde(grid, lam):
    """Etilde per grid mode with the energy snapped to the frequency grid."""
    if lam == 0.0:
        return np.full(grid.n_modes, np.inf)
    es = np.array([snap_energy(e, grid.dp0) for e in grid.energies])
    return es / (lam ** 2 * grid.T)


def lattice_partition_function(grid, lam):
    """Z = prod (1+Etilde)/Etilde with snapped energies (lattice-exact form)."""
    et = snapped_etilde(grid, lam)
    if np.any(np.isinf(et)):
        return 1.0
    return float(np.prod((1.0 + et) / et))


def s00_modulus_sq_lattice(modes4d, grid, lam):
    """|S00|^2 in the exact lattice form: the noise entering the exponent is
    read off at the snapped on-shell frequency of every spatial mode."""
    restr = ff.onshell_restriction(modes4d, grid)
    es = np.array([snap_energy(e, grid.dp0) for e in grid.energies])
    power = np.sum(np.abs(restr.w) ** 2 / (2.0 * es))
    return float(np.exp(-lam ** 2 * power * grid.d3p / (2.0 * np.pi) ** 3))


def _is_onshell(p4, grid, tol=1e-9):
    p4 = np.asarray(p4, dtype=float)
    e = np.sqrt(grid.m ** 2 + np.sum(p4[1:] ** 2))
    return abs(abs(p4[0]) - snap_energy(e, grid.dp0)) < tol


def pairing_kernel(p, q, config, tol=1e-9):
    """e(p,q) = (2 pi)^4 delta4(p+q) (1 - delta_onshell/(1+Etilde_p))."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    grid = config.grid
    if np.any(np.abs(p + q) > tol):
        return 0.0
    value = (2.0 * np.pi) ** 4 / grid.d4p
    if _is_onshell(p, grid, tol):
        ehat = snap_energy(np.sqrt(grid.m ** 2 + np.sum(p[1:] ** 2)), grid.dp0)
        etilde = ehat / (config.lam ** 2 * grid.T) if config.lam else np.inf
        value *= 1.0 - 1.0 / (1.0 + etilde)
    return float(value)


def _perfect_matchings(indices):
    if not indices:
        yield []
        return
    first, rest = indices[0], indices[1:]
    for k, second in enumerate(rest):
        for tail in _perfect_matchings(rest[:k] + rest[k + 1:]):
            yield [(first, second)] + tail


def wick_expectation(momenta, config):
    """E[|S00|^2 W(p_1)...W(p_2n)] = (1/Z) sum over perfect matchings of
    prod e(p_i, p_j); zero for odd-length lists."""
    n = len(momenta)
    if n % 2 == 1:
        return 0.0
    z = lattice_partition_function(config.grid, config.lam)
    total = 0.0
    for matching in _perfect_matchings(list(range(n))):
        term = 1.0
        for i, j in matching:
            term *= pairing_kernel(momenta[i], momenta[j], config)
            if term == 0.0:
                break
        total += term
    return total / z


# ---------------------------------------------------------------------------
# Tree-level S-matrix of the conventional theory
# ---------------------------------------------------------------------------

def tree_amplitude_2to2(p1, p2, pp1, pp2, g, grid, include_free=True):
    """S_{p'1 p'2, p1 p2} at tree level: the free delta-delta terms plus the
    connected order-g term -ig (2 pi)^4 delta4(sum) prod 1/sqrt((2 pi)^3 2E)."""
    moms = [np.asarray(x, dtype=float) for x in (p1, p2, pp1, pp2)]
    es = [np.sqrt(grid.m ** 2 + np.sum(p ** 2)) for p in moms]
    d3 = 1.0 / grid.d3p

    def kron3(a, b):
        return d3 if np.all(np.abs(a - b) < 1e-9) else 0.0

    free = 0.0
    if include_free:
        free = kron3(moms[0], moms[2]) * kron3(moms[1], moms[3]) \
            + kron3(moms[0], moms[3]) * kron3(moms[1], moms[2])
    dp3 = moms[0] + moms[1] - moms[2] - moms[3]
    de = es[0] + es[1] - es[2] - es[3]
    if np.any(np.abs(dp3) > 1e-9) or abs(de) > 1e-9:
        connected = 0.0
    else:
        delta4 = 1.0 / grid.d4p
        connected = -1j * g * (2.0 * np.pi) ** 4 * delta4 \
            / np.prod([np.sqrt((2.0 * np.pi) ** 3 * 2.0 * e) for e in es])
    return free + connected


# ---------------------------------------------------------------------------
# Order-g vacuum persistence amplitude
# ---------------------------------------------------------------------------

def _inverse_propagator_array(lattice, m, eta):
    p0 = lattice.p0_coords
    p1 = lattice.p_coords(0)
    p2 = lattice.p_coords(1)
    p3 = lattice.p_coords(2)
    psq = (-p0[:, None, None, None] ** 2 + p1[None, :, None, None] ** 2
           + p2[None, None, :, None] ** 2 + p3[None, None, None, :] ** 2)
    return psq + m ** 2 - 1j * eta


def sg00_terms(modes4d, config):
    """The three bracketed order-g corrections as lattice sums.

    term1: four noise insertions (momentum conserved modulo the reciprocal
           lattice, evaluated by circular convolution);
    term2: one noise contraction times the tadpole loop;
    term3: the pure vacuum bubble, proportional to delta4(0) = 2TV/(2 pi)^4.
    """
    if modes4d.kind != "lattice4d":
        raise ValueError("sg00 needs 4D lattice modes")
    lat = modes4d.lattice
    if lat.n_sites > MAX_LATTICE_SITES:
        raise ValueError(
            f"lattice has {lat.n_sites} sites; cost guard allows at most "
            f"{MAX_LATTICE_SITES}")
    g = config.g
    lam = config.lam
    m = config.grid.m
    eta = config.eta
    d4p = modes4d.d4p
    dinv = _inverse_propagator_array(lat, m, eta)
    # starred insertions carry W*(q), unstarred W(q); both keep the -i eta pole
    a = np.conj(modes4d.w) / dinv
    b = modes4d.w / dinv

    # circular convolutions C(s) = sum_{q+q'=s} f(q) f(q') via position space
    def self_convolve(f):
        pos = np.fft.ifftn(f) * lat.n_sites
        return np.fft.fftn(pos * pos) / lat.n_sites

    term1 = (-1j * g * (2.0 * np.pi) ** 4 / 24.0) * lam ** 4 \
        / (2.0 * np.pi) ** 16 * d4p ** 3 \
        * np.sum(self_convolve(a) * self_convolve(b))

    loop = np.sum(d4p / dinv)
    term2 = (-1j * g * (2.0 * np.pi) ** 4 / 4.0) * lam ** 2 \
        / (2.0 * np.pi) ** 8 * (-1j / (2.0 * np.pi) ** 4) \
        * (d4p * np.sum(np.abs(modes4d.w) ** 2 / dinv ** 2)) * loop

    delta4_0 = 2.0 * lat.T * lat.V / (2.0 * np.pi) ** 4
    term3 = (-1j * g * (2.0 * np.pi) ** 4 / 8.0) * delta4_0 \
        * (-1j) ** 2 / (2.0 * np.pi) ** 8 * loop ** 2

    return complex(term1), complex(term2), complex(term3)


def sg00_order_g(modes4d, config):
    """S^g00 = S00 (1 + term1 + term2 + term3) to order g."""
    t1, t2, t3 = sg00_terms(modes4d, config)
    s00 = ff.s00_full(modes4d, config.lam, config.grid.m, eta=config.eta)
    return s00 * (1.0 + t1 + t2 + t3)


def term2_eta_sensitivity(modes4d, config, factors=(0.5, 1.0, 2.0)):
    """term2 at eta scaled by each factor; the continuum eta -> 0 treatment is
    not pinned down, so callers get the spread instead of a claimed limit."""
    out = []
    for f in factors:
        scaled = Phi4Config(g=config.g, scheme=config.scheme,
                            grid=config.grid, eta=f * config.eta)
        out.append((f, sg00_terms(modes4d, scaled)[1]))
    return out


# ---------------------------------------------------------------------------
# Renormalized dot factors
# ---------------------------------------------------------------------------

def _integral_d3q_over_e3(cutoff, m):
    x = cutoff / m
    return 4.0 * np.pi * (np.log(x + np.sqrt(x ** 2 + 1.0))
                          - x / np.sqrt(x ** 2 + 1.0))


def _integral_d3q_over_e2(cutoff, m):
    return 4.0 * np.pi * (cutoff - m * np.arctan(cutoff / m))


def dot_internal_factor(sign, scheme, ladder=ff.CUTOFF_LADDER):
    """(lam^2/(2 pi)^4) int d4q (q^2+m^2 -/+ i eta)^-2 = +/- i lam^2/(32 pi^3)
    int d3q/E^3, with its cutoff ladder under lam = lam_p m / cutoff."""
    if sign not in (+1, -1):
        raise ValueError("sign must be +1 or -1")

    def value(cut):
        lam = scheme.bare_lam(cut)
        return sign * 1j * lam ** 2 / (32.0 * np.pi ** 3) \
            * _integral_d3q_over_e3(cut, scheme.m)

    rungs = [(ratio, value(ratio * scheme.m)) for ratio in ladder]
    return value(scheme.cutoff), rungs


def dot_mixed_factor(scheme, T, ladder=ff.CUTOFF_LADDER):
    """(lam^2/(2 pi)^4) int d4q |q^2+m^2-i eta|^-2 = lam^2 T/(16 pi^3)
    int d3q/E^2, with its cutoff ladder."""

    def value(cut):
        lam = scheme.bare_lam(cut)
        return lam ** 2 * T / (16.0 * np.pi ** 3) \
            * _integral_d3q_over_e2(cut, scheme.m)

    rungs = [(ratio, value(ratio * scheme.m)) for ratio in ladder]
    return value(scheme.cutoff), rungs


def dressed_external_suppression(p, scheme, T, ladder=ff.CUTOFF_LADDER):
    """1/(1+Etilde_p) for an external line carrying a noise dot, with the
    cutoff ladder under lam = lam_p m / cutoff; the renormalized limit is 0."""
    p = np.asarray(p, dtype=float)
    e = np.sqrt(scheme.m ** 2 + np.sum(p ** 2))

    def value(cut):
        lam = scheme.bare_lam(cut)
        if lam == 0.0:
            return 0.0
        return 1.0 / (1.0 + e / (lam ** 2 * T))

    rungs = [(ratio, value(ratio * scheme.m)) for ratio in ladder]
    return value(scheme.cutoff), rungs


# ---------------------------------------------------------------------------
# Collision density matrix
# ---------------------------------------------------------------------------

def renormalized_z(scheme, T, V):
    return float(np.exp(T * V * scheme.m ** 2 * scheme.lam_p ** 2
                        / (4.0 * np.pi ** 2)))


def equal_momentum_check_g(m_count, n_count, p_multiset, q_multiset, tol=1e-9):
    """Nonzero density blocks need m+n even and equal total outgoing momentum."""
    if (m_count + n_count) % 2 == 1:
        return False
    psum = np.sum(np.asarray(p_multiset, dtype=float).reshape(-1, 3), axis=0) \
        if len(p_multiset) else np.zeros(3)
    qsum = np.sum(np.asarray(q_multiset, dtype=float).reshape(-1, 3), axis=0) \
        if len(q_multiset) else np.zeros(3)
    return bool(np.all(np.abs(psum - qsum) < tol))


def rho_two_particle_block(p1, p2, out_pair, conj_pair, config, T, V,
                           s_provider=None):
    """(1/Z) S^g|_{lam=0}(out; in) conj(S^g|_{lam=0}(conj_out; in))."""
    if s_provider is None:
        def s_provider(a, b, c, d):
            return tree_amplitude_2to2(a, b, c, d, config.g, config.grid)
    z = renormalized_z(config.scheme, T, V)
    s = s_provider(p1, p2, out_pair[0], out_pair[1])
    sc = s_provider(p1, p2, conj_pair[0], conj_pair[1])
    return s * np.conj(sc) / z


def rho_three_particle_block(p1, p2, out_triple, conj_triple, config, T, V,
                             s_provider=None):
    """Nine spectator terms: delta3(p'_a - q'_b)/(1+Etilde) times the
    two-particle lam=0 element of the remaining pairs, prefactor 1/Z."""
    if s_provider is None:
        def s_provider(a, b, c, d):
            return tree_amplitude_2to2(a, b, c, d, config.g, config.grid)
    z = renormalized_z(config.scheme, T, V)
    grid = config.grid
    outs = [np.asarray(p, dtype=float) for p in out_triple]
    conjs = [np.asarray(q, dtype=float) for q in conj_triple]
    total = 0.0 + 0.0j
    for a in range(3):
        for b in range(3):
            if np.any(np.abs(outs[a] - conjs[b]) > 1e-9):
                continue
            suppression, _ = dressed_external_suppression(
                outs[a], config.scheme, T)
            spectator = suppression / grid.d3p
            rest_out = [outs[k] for k in range(3) if k != a]
            rest_conj = [conjs[k] for k in range(3) if k != b]
            s = s_provider(p1, p2, rest_out[0], rest_out[1])
            sc = s_provider(p1, p2, rest_conj[0], rest_conj[1])
            total += spectator * s * np.conj(sc)
    return total / z


def rho_collision_full(rho_conv, grid, scheme, T, truncation=None):
    """Dress a conventional-theory density matrix with noise excitations:

        (1/Z) sum_n (1/n!) sum_{q_1..q_n} prod_j 1/(1+Etilde_{q_j})
              a^dag_{q_1}..a^dag_{q_n} rho_conv a_{q_n}..a_{q_1}

    in the unit-normalized discrete mode basis.  With a vacuum input this is
    the noninteracting vacuum-driven density matrix.
    """
    if truncation is None:
        truncation = rho_conv.basis.truncation
    basis = rho_conv.basis
    lam = scheme.bare_lam()
    et = ff.etilde_values(grid, lam, T)
    z = ff.partition_function_discrete(grid, lam, T)
    coeffs = 1.0 / (1.0 + et)
    creators = [basis.create(k) for k in range(grid.n_modes)]
    total = np.zeros_like(rho_conv.matrix)
    layer = rho_conv.matrix.copy()
    n = 0
    while True:
        total = total + layer / factorial(n)
        n += 1
        nxt = np.zeros_like(layer)
        for k, c in enumerate(creators):
            nxt += coeffs[k] * (c @ layer @ c.conj().T)
        if not np.any(nxt) or n > truncation.N_max:
            break
        layer = nxt
    mat = total / z
    return ff.FockDensityMatrix(grid=grid, basis=basis, matrix=mat,
                                truncated_mass=float(1.0 - np.trace(mat).real))
