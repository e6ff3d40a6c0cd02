import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stoqft import freefield as ff, mcstats, noise, phi4
from stoqft.fock import Truncation
from stoqft.rng import stream_rng

M = 1.0


@pytest.fixture(scope="module")
def lattice():
    return noise.SpacetimeLattice(Nt=8, Nx=4, Ny=4, Nz=4, T=4.0, L=8.0)


@pytest.fixture(scope="module")
def lattice_grid(lattice):
    coords = [lattice.p_coords(a) for a in range(3)]
    px, py, pz = np.meshgrid(*coords, indexing="ij")
    mom = np.stack([px.ravel(), py.ravel(), pz.ravel()], axis=1)
    return ff.MomentumGrid.explicit(L=lattice.L, m=M, T=lattice.T, momenta=mom)


@pytest.fixture(scope="module")
def config(lattice, lattice_grid):
    scheme = ff.RenormalizationScheme(lam_p=1.5, cutoff=5.0, m=M)  # bare 0.3
    return phi4.Phi4Config(g=0.5, scheme=scheme, grid=lattice_grid,
                           eta=lattice.dp0)


def _w_lookup(modes4d, p4):
    lat = modes4d.lattice
    it = int(np.argmin(np.abs(lat.p0_coords - p4[0])))
    ix = int(np.argmin(np.abs(lat.p_coords(0) - p4[1])))
    iy = int(np.argmin(np.abs(lat.p_coords(1) - p4[2])))
    iz = int(np.argmin(np.abs(lat.p_coords(2) - p4[3])))
    assert abs(lat.p0_coords[it] - p4[0]) < 1e-9
    return modes4d.w[it, ix, iy, iz]


# ---------------------------------------------------------------------------
# snapped on-shell bookkeeping
# ---------------------------------------------------------------------------

def test_snap_energy_nearest_positive_frequency():
    assert phi4.snap_energy(1.0, 0.4) == pytest.approx(0.8)
    assert phi4.snap_energy(0.05, 0.4) == pytest.approx(0.4)  # never zero
    assert phi4.snap_energy(1.0, 1.0) == pytest.approx(1.0)


@given(st.floats(min_value=0.01, max_value=50.0),
       st.floats(min_value=0.05, max_value=5.0))
def test_snap_energy_within_half_spacing(e, dp0):
    snapped = phi4.snap_energy(e, dp0)
    assert snapped > 0.0
    assert abs(snapped - e) <= 0.5 * dp0 + 1e-12 or snapped == dp0


def test_lattice_partition_function_uses_snapped_energies(lattice_grid):
    lam = 0.3
    et = phi4.snapped_etilde(lattice_grid, lam)
    z = phi4.lattice_partition_function(lattice_grid, lam)
    assert z == pytest.approx(float(np.prod((1.0 + et) / et)))
    assert phi4.lattice_partition_function(lattice_grid, 0.0) == 1.0


def test_is_onshell_classification(lattice, lattice_grid):
    b = 2 * np.pi / lattice.L
    e1 = phi4.snap_energy(np.sqrt(M ** 2 + b ** 2), lattice.dp0)
    assert phi4._is_onshell(np.array([e1, b, 0, 0]), lattice_grid)
    assert phi4._is_onshell(np.array([-e1, -b, 0, 0]), lattice_grid)
    assert not phi4._is_onshell(np.array([2 * lattice.dp0, 0, 0, 0]),
                                lattice_grid)


# ---------------------------------------------------------------------------
# Wick expectations against Monte Carlo
# ---------------------------------------------------------------------------

def test_wick_expectation_matches_monte_carlo(lattice, lattice_grid, config):
    dp0, b = lattice.dp0, 2 * np.pi / lattice.L
    e1 = phi4.snap_energy(np.sqrt(M ** 2 + b ** 2), dp0)
    p_on = np.array([e1, b, 0, 0])
    m_on = -p_on
    p_off = np.array([2 * dp0, 0, 0, 0])
    m_off = -p_off
    cases = [([p_on, m_on], "on-shell pair"),
             ([p_off, m_off], "off-shell pair"),
             ([p_on, m_on, p_off, m_off], "mixed quadruple")]
    n = 6000
    draws = []
    for i in range(n):
        field = noise.sample_spacetime_noise(lattice, stream_rng(21, "wick", i))
        modes = noise.fourier_modes(field)
        s2 = phi4.s00_modulus_sq_lattice(modes, lattice_grid, config.lam)
        draws.append((s2, {id(p): _w_lookup(modes, p)
                           for p in (p_on, m_on, p_off, m_off)}))
    for moms, label in cases:
        pred = phi4.wick_expectation(moms, config)
        vals = np.array([(s2 * np.prod([w[id(p)] for p in moms])).real
                         for s2, w in draws])
        est = mcstats.estimate_from_samples(vals)
        assert mcstats.moment_test(label, est, pred).passed, label


def test_wick_expectation_odd_length_is_zero(config):
    assert phi4.wick_expectation([np.array([0.5, 0, 0, 0])], config) == 0.0


def test_pairing_kernel_momentum_conservation(lattice, config):
    dp0 = lattice.dp0
    p = np.array([2 * dp0, 0, 0, 0])
    assert phi4.pairing_kernel(p, p, config) == 0.0
    off = phi4.pairing_kernel(p, -p, config)
    assert off == pytest.approx((2 * np.pi) ** 4 / config.grid.d4p)
    # on-shell pairs carry the 1 - 1/(1+Etilde) suppression
    e1 = phi4.snap_energy(M, dp0)
    q = np.array([e1, 0, 0, 0])
    et = e1 / (config.lam ** 2 * lattice.T)
    assert phi4.pairing_kernel(q, -q, config) == pytest.approx(
        (2 * np.pi) ** 4 / config.grid.d4p * (1.0 - 1.0 / (1.0 + et)))


def test_lattice_s00_mean_is_inverse_lattice_z(lattice, lattice_grid, config):
    z = phi4.lattice_partition_function(lattice_grid, config.lam)
    vals = np.array([phi4.s00_modulus_sq_lattice(
        noise.fourier_modes(
            noise.sample_spacetime_noise(lattice, stream_rng(21, "z", i))),
        lattice_grid, config.lam) for i in range(3000)])
    est = mcstats.estimate_from_samples(vals)
    assert mcstats.moment_test("lattice_s00", est, 1.0 / z).passed


# ---------------------------------------------------------------------------
# order-g vacuum amplitude
# ---------------------------------------------------------------------------

def _tiny_lattice_setup():
    lat = noise.SpacetimeLattice(Nt=2, Nx=2, Ny=2, Nz=2, T=1.0, L=4.0)
    coords = [lat.p_coords(a) for a in range(3)]
    mom = [[a, b, c] for a in coords[0] for b in coords[1] for c in coords[2]]
    grid = ff.MomentumGrid.explicit(L=lat.L, m=M, T=lat.T, momenta=mom)
    scheme = ff.RenormalizationScheme(lam_p=1.5, cutoff=5.0, m=M)
    return lat, phi4.Phi4Config(g=0.7, scheme=scheme, grid=grid, eta=lat.dp0)


def test_sg00_terms_match_brute_force_sums():
    lat, cfg = _tiny_lattice_setup()
    modes = noise.fourier_modes(
        noise.sample_spacetime_noise(lat, stream_rng(5, "bf")))
    t1, t2, t3 = phi4.sg00_terms(modes, cfg)
    lam, g = cfg.lam, cfg.g

    q0s = lat.p0_coords
    qs = [lat.p_coords(a) for a in range(3)]
    shape = lat.shape
    idx = list(np.ndindex(shape))

    def four(i):
        return np.array([q0s[i[0]], qs[0][i[1]], qs[1][i[2]], qs[2][i[3]]])

    def d(q):
        return -q[0] ** 2 + q[1] ** 2 + q[2] ** 2 + q[3] ** 2 + M ** 2 \
            - 1j * cfg.eta

    d4p = lat.dp0 * (2 * np.pi) ** 3 / lat.V
    w = modes.w
    bf1 = 0j
    for i1 in idx:
        for i2 in idx:
            for i3 in idx:
                i4 = tuple((i1[k] + i2[k] - i3[k]) % shape[k] for k in range(4))
                bf1 += (np.conj(w[i1]) * np.conj(w[i2]) * w[i3] * w[i4]
                        / (d(four(i1)) * d(four(i2)) * d(four(i3))
                           * d(four(i4))))
    bf1 *= (-1j * g * (2 * np.pi) ** 4 / 24.0) * lam ** 4 \
        / (2 * np.pi) ** 16 * d4p ** 3
    assert abs(t1 - bf1) / abs(bf1) < 1e-12

    bf2 = sum(abs(w[i1]) ** 2 / (d(four(i1)) ** 2 * d(four(i3)))
              for i1 in idx for i3 in idx)
    bf2 *= (-1j * g * (2 * np.pi) ** 4 / 4.0) * lam ** 2 / (2 * np.pi) ** 8 \
        * (-1j / (2 * np.pi) ** 4) * d4p ** 2
    assert abs(t2 - bf2) / abs(bf2) < 1e-12

    bf3 = sum(1.0 / (d(four(i1)) * d(four(i2))) for i1 in idx for i2 in idx)
    bf3 *= (-1j * g * (2 * np.pi) ** 4 / 8.0) \
        * (2 * lat.T * lat.V / (2 * np.pi) ** 4) \
        * (-1j) ** 2 / (2 * np.pi) ** 8 * d4p ** 2
    assert abs(t3 - bf3) / abs(bf3) < 1e-12


def test_sg00_reduces_to_s00_at_zero_g(lattice, lattice_grid, config):
    modes = noise.fourier_modes(
        noise.sample_spacetime_noise(lattice, stream_rng(21, "sg")))
    cfg0 = phi4.Phi4Config(g=0.0, scheme=config.scheme, grid=lattice_grid,
                           eta=config.eta)
    s00 = ff.s00_full(modes, config.lam, M, eta=config.eta)
    assert phi4.sg00_order_g(modes, cfg0) == pytest.approx(s00, rel=1e-12)


def test_sg00_zero_coupling_leaves_only_vacuum_bubble(lattice, lattice_grid,
                                                      config):
    modes = noise.fourier_modes(
        noise.sample_spacetime_noise(lattice, stream_rng(21, "sg")))
    scheme0 = ff.RenormalizationScheme(lam_p=0.0, cutoff=5.0, m=M)
    cfg = phi4.Phi4Config(g=0.5, scheme=scheme0, grid=lattice_grid,
                          eta=config.eta)
    t1, t2, t3 = phi4.sg00_terms(modes, cfg)
    assert t1 == 0.0 and t2 == 0.0
    assert abs(t3) > 0.0


def test_sg00_rejects_oversized_lattice(config):
    big = noise.SpacetimeLattice(Nt=16, Nx=8, Ny=8, Nz=8, T=4.0, L=8.0)
    modes = noise.NoiseModes(kind="lattice4d",
                             w=np.zeros(big.shape, dtype=complex),
                             lattice=big, T=big.T)
    with pytest.raises(ValueError):
        phi4.sg00_terms(modes, config)


def test_term2_eta_sensitivity_reports_spread(lattice, lattice_grid, config):
    modes = noise.fourier_modes(
        noise.sample_spacetime_noise(lattice, stream_rng(21, "eta")))
    spread = phi4.term2_eta_sensitivity(modes, config)
    assert [f for f, _ in spread] == [0.5, 1.0, 2.0]
    assert len({v for _, v in spread}) == 3


# ---------------------------------------------------------------------------
# renormalized dot factors
# ---------------------------------------------------------------------------

def test_dot_internal_factor_closed_form_vs_quadrature():
    from scipy.integrate import quad
    scheme = ff.RenormalizationScheme(lam_p=0.8, cutoff=10.0, m=1.0)
    val, rungs = phi4.dot_internal_factor(+1, scheme)
    lam = scheme.bare_lam()
    q3, _ = quad(lambda k: 4 * np.pi * k ** 2 / (k ** 2 + 1) ** 1.5, 0, 10.0)
    assert val == pytest.approx(1j * lam ** 2 / (32 * np.pi ** 3) * q3,
                                rel=1e-10)
    minus, _ = phi4.dot_internal_factor(-1, scheme)
    assert minus == pytest.approx(-val)
    assert [r for r, _ in rungs] == list(ff.CUTOFF_LADDER)
    mags = [abs(v) for _, v in rungs]
    assert all(a > b for a, b in zip(mags, mags[1:]))


def test_dot_mixed_factor_closed_form_vs_quadrature():
    from scipy.integrate import quad
    scheme = ff.RenormalizationScheme(lam_p=0.8, cutoff=10.0, m=1.0)
    val, rungs = phi4.dot_mixed_factor(scheme, T=1.0)
    lam = scheme.bare_lam()
    q2, _ = quad(lambda k: 4 * np.pi * k ** 2 / (k ** 2 + 1), 0, 10.0)
    assert val == pytest.approx(lam ** 2 / (16 * np.pi ** 3) * q2, rel=1e-10)
    mags = [abs(v) for _, v in rungs]
    assert all(a > b for a, b in zip(mags, mags[1:]))


def test_dressed_external_suppression_vanishes_with_cutoff():
    scheme = ff.RenormalizationScheme(lam_p=0.8, cutoff=10.0, m=1.0)
    val, rungs = phi4.dressed_external_suppression([0.5, 0, 0], scheme, T=1.0)
    e = np.sqrt(1.25)
    lam = scheme.bare_lam()
    assert val == pytest.approx(1.0 / (1.0 + e / (lam ** 2 * 1.0)))
    mags = [v for _, v in rungs]
    assert all(a > b for a, b in zip(mags, mags[1:]))
    assert mags[-1] < 1e-4


# ---------------------------------------------------------------------------
# density-matrix blocks and collisions
# ---------------------------------------------------------------------------

def test_tree_amplitude_symmetry_and_energy_conservation(lattice_grid):
    b = 2 * np.pi / 8.0
    pa, pb = np.array([b, 0, 0]), np.array([-b, 0, 0])
    out1 = (np.array([0, b, 0]), np.array([0, -b, 0]))
    s1 = phi4.tree_amplitude_2to2(pa, pb, *out1, 0.5, lattice_grid)
    s2 = phi4.tree_amplitude_2to2(pb, pa, out1[1], out1[0], 0.5, lattice_grid)
    assert s1 == s2
    assert abs(s1) > 0.0
    # energy off by one frequency unit: connected term vanishes, no free term
    bad = (np.array([b, b, 0]), np.array([-b, -b, 0]))
    assert phi4.tree_amplitude_2to2(pa, pb, *bad, 0.5, lattice_grid) == 0.0


def test_tree_amplitude_free_part(lattice_grid):
    b = 2 * np.pi / 8.0
    pa, pb = np.array([b, 0, 0]), np.array([-b, 0, 0])
    with_free = phi4.tree_amplitude_2to2(pa, pb, pa, pb, 0.5, lattice_grid)
    connected = phi4.tree_amplitude_2to2(pa, pb, pa, pb, 0.5, lattice_grid,
                                         include_free=False)
    assert with_free - connected == pytest.approx(1.0 / lattice_grid.d3p ** 2)


def test_equal_momentum_check_g():
    b = 2 * np.pi / 8.0
    pa, pb = np.array([b, 0, 0]), np.array([-b, 0, 0])
    assert phi4.equal_momentum_check_g(2, 2, [pa, pb], [pb, pa])
    assert not phi4.equal_momentum_check_g(2, 1, [pa, pb], [pa + pb])
    assert not phi4.equal_momentum_check_g(2, 2, [pa, pa], [pa, pb])
    assert phi4.equal_momentum_check_g(0, 0, [], [])


def test_rho_two_particle_block_is_scaled_tree_product(config, lattice):
    b = 2 * np.pi / lattice.L
    p1, p2 = np.array([b, 0, 0]), np.array([-b, 0, 0])
    out = (np.array([0, b, 0]), np.array([0, -b, 0]))
    block = phi4.rho_two_particle_block(p1, p2, out, (p1, p2), config,
                                        T=lattice.T, V=lattice.V)
    z = phi4.renormalized_z(config.scheme, lattice.T, lattice.V)
    s = phi4.tree_amplitude_2to2(p1, p2, *out, config.g, config.grid)
    sc = phi4.tree_amplitude_2to2(p1, p2, p1, p2, config.g, config.grid)
    assert block == pytest.approx(s * np.conj(sc) / z, rel=1e-12)


def test_rho_three_particle_block_spectator_structure(config, lattice):
    b = 2 * np.pi / lattice.L
    p1, p2 = np.array([b, 0, 0]), np.array([-b, 0, 0])
    spect = np.array([0, 0, b])
    out = (p1, p2, spect)
    conj = (p1, p2, spect)
    val = phi4.rho_three_particle_block(p1, p2, out, conj, config,
                                        T=lattice.T, V=lattice.V)
    assert abs(val) > 0.0
    # a spectator that matches nothing in the conjugate triple kills the block
    lonely = (p1, p2, np.array([0, 0, -b]))
    assert phi4.rho_three_particle_block(p1, p2, out, lonely, config,
                                         T=lattice.T, V=lattice.V) == 0.0


def test_rho_collision_full_vacuum_reduction():
    small = ff.MomentumGrid.explicit(L=2 * np.pi, m=1.0, T=1.0,
                                     momenta=[[0, 0, 0], [1, 0, 0]])
    tr = Truncation(n_max=25, N_max=40, mass_bound=1e-9)
    ref = ff.density_vacuum(small, 0.5, 1.0, tr)
    scheme = ff.RenormalizationScheme(lam_p=1.5, cutoff=3.0, m=1.0)  # bare 0.5
    vac_vec = ref.basis.vacuum_vector()
    vac = ff.FockDensityMatrix(grid=small, basis=ref.basis,
                               matrix=np.outer(vac_vec, vac_vec.conj()),
                               truncated_mass=0.0)
    out = phi4.rho_collision_full(vac, small, scheme, 1.0, tr)
    assert np.max(np.abs(out.matrix - ref.matrix)) < 1e-12
    assert out.trace() == pytest.approx(1.0, abs=1e-9)


def test_renormalized_z_matches_poisson_mean():
    scheme = ff.RenormalizationScheme(lam_p=0.4, cutoff=50.0, m=1.0)
    t, v = 2.0, 100.0
    assert np.log(phi4.renormalized_z(scheme, t, v)) == pytest.approx(
        ff.poisson_mean(scheme, t, v), rel=1e-12)
