"""Experiment catalog for the CLI: each experiment maps a validated JSON
config onto physics-module calls and returns tables, checks, derived
constants, and figure painters.

Experiment results are deterministic functions of (params, seed): tables are
plain lists of rows ready for CSV serialization, checks are TestReports, and
figures are callbacks invoked with a matplotlib Axes so the CLI owns all I/O.
"""
import numpy as np

from . import freefield as ff
from . import mcstats, noise, oscillator, phi4
from .fock import Truncation
from .rng import stream_rng


class ConfigError(ValueError):
    """Invalid or incomplete experiment configuration."""


def _require(params, fields):
    missing = [f for f in fields if f not in params]
    if missing:
        raise ConfigError("missing config field(s): " + ", ".join(missing))
    for name in fields:
        value = params[name]
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            if name not in _MAY_BE_ZERO and value <= 0:
                raise ConfigError(f"config field {name} must be positive")


_MAY_BE_ZERO = {"lam", "lam_p", "g", "omega", "q0", "p0"}


class ExperimentResult:
    def __init__(self, tables, checks, derived, figures=None, warnings=None):
        self.tables = tables          # {name: (header, rows)}
        self.checks = checks          # [TestReport]
        self.derived = derived        # {name: value}
        self.figures = figures or {}  # {name: callable(ax)}
        self.warnings = warnings or []


# ---------------------------------------------------------------------------
# oscillator
# ---------------------------------------------------------------------------

def run_oscillator(params, seed):
    _require(params, ["m", "omega", "lam", "t_final", "n_steps", "n_paths"])
    m, omega, lam = params["m"], params["omega"], params["lam"]
    t_final = params["t_final"]
    n_steps = int(params["n_steps"])
    n_paths = int(params["n_paths"])
    dt = t_final / n_steps

    # decoherence of off-diagonal phases, Hamiltonian disabled
    separations = params.get("separations", [0.25, 0.5, 1.0, 1.5, 2.0])
    times = np.linspace(dt, t_final, 5)
    rows = []
    checks = []
    for k, (dx, t) in enumerate(zip(separations, times)):
        n_sub = max(1, int(round(t / dt)))
        samples = np.empty(n_paths)
        for i in range(n_paths):
            w = noise.sample_wiener(n_sub, dt, stream_rng(seed, "deco", i))
            samples[i] = np.cos(lam * dx * w.cumulative()[-1])
        est = mcstats.estimate_from_samples(samples)
        expected = oscillator.decoherence_factor(dx, 0.0, n_sub * dt, lam)
        checks.append(mcstats.moment_test(f"decoherence_dx_{dx:g}", est, expected))
        rows.append([dx, n_sub * dt, est.mean, est.stderr, expected])

    # packet width law per path
    packet = oscillator.GaussianPacket(
        q0=params.get("q0", 0.0), p0=params.get("p0", 0.0),
        sigma0=params.get("sigma0", 1.0))
    wrows = []
    for t in np.linspace(0.0, t_final, 9):
        sig = packet.sigma0 * np.sqrt(1.0 + t ** 2 / (m ** 2 * packet.sigma0 ** 4))
        wrows.append([t, sig])

    tables = {
        "decoherence": (["separation", "t", "mc_mean", "mc_stderr", "expected"],
                        rows),
        "packet_width": (["t", "sigma_exact"], wrows),
    }
    derived = {"dt": dt, "lindblad_rate": lam ** 2 / 2.0}

    def paint(ax):
        r = np.array(rows)
        ax.plot(r[:, 0], r[:, 2], "o", label="MC")
        ax.plot(r[:, 0], r[:, 4], "-", label="exact decay")
        ax.set_xlabel("separation x-y")
        ax.set_ylabel("coherence")
        ax.legend()

    return ExperimentResult(tables, checks, derived, {"decoherence": paint})


# ---------------------------------------------------------------------------
# free field
# ---------------------------------------------------------------------------

def _grid_from_params(params):
    return ff.MomentumGrid(L=params["L"], m=params["m"], T=params["T"],
                           cutoff=params["cutoff"])


def run_freefield_vacuum(params, seed):
    _require(params, ["m", "lam", "T", "L", "cutoff", "n_samples"])
    grid = _grid_from_params(params)
    lam, T = params["lam"], params["T"]
    n = int(params["n_samples"])
    et = ff.etilde_values(grid, lam, T)
    z = ff.partition_function_discrete(grid, lam, T)

    occ = np.zeros((n, grid.n_modes))
    s2 = np.empty(n)
    for i in range(n):
        modes = noise.sample_onshell_modes(grid, T, stream_rng(seed, "vac", i))
        c = ff.coupling_from_modes(modes, lam, grid)
        alphas, _ = ff.final_state_vacuum(c)
        occ[i] = np.abs(alphas) ** 2
        s2[i] = ff.s00_modulus_sq(c)

    checks = [mcstats.moment_test("mean_s00_sq",
                                  mcstats.estimate_from_samples(s2), 1.0 / z)]
    rows = []
    for k in range(grid.n_modes):
        est = mcstats.estimate_from_samples(occ[:, k])
        rows.append([*grid.modes[k], grid.energies[k], et[k],
                     est.mean, est.stderr, 1.0 / et[k]])
        checks.append(mcstats.moment_test(f"occupancy_mode_{k}", est, 1.0 / et[k]))
    tables = {"occupancy": (["px", "py", "pz", "E", "Etilde",
                             "mc_mean", "mc_stderr", "expected"], rows)}
    derived = {"d3p": grid.d3p, "dp0": grid.dp0, "Z": z, "n_modes": grid.n_modes}

    def paint(ax):
        r = np.array(rows)
        ax.errorbar(r[:, 3], r[:, 5], yerr=r[:, 6], fmt="o", label="MC")
        ax.plot(r[:, 3], r[:, 7], "x", label="1/Etilde")
        ax.set_xlabel("E_p")
        ax.set_ylabel("mean occupancy")
        ax.legend()

    return ExperimentResult(tables, checks, derived, {"occupancy": paint})


def _truncation_from_params(params):
    t = params.get("truncation", {})
    return Truncation(n_max=int(t.get("n_max", 6)),
                      N_max=int(t.get("N_max", 8)),
                      mass_bound=float(t.get("mass_bound", 1e-6)))


def run_freefield_single(params, seed):
    _require(params, ["m", "lam", "T", "L", "cutoff", "n_samples"])
    grid = _grid_from_params(params)
    lam, T = params["lam"], params["T"]
    tr = _truncation_from_params(params)
    rho = ff.density_single(0, grid, lam, T, tr)
    diag = rho.diagonal()

    n = int(params["n_samples"])
    counts = np.zeros(rho.basis.size)
    for i in range(n):
        modes = noise.sample_onshell_modes(grid, T, stream_rng(seed, "single", i))
        c = ff.coupling_from_modes(modes, lam, grid)
        basis, vec = ff.final_state_particles([0], c, tr)
        counts += np.abs(vec) ** 2
    counts /= n

    checks = [mcstats.TestReport(
        name="trace_accounting",
        statistic=abs(rho.trace() + rho.truncated_mass - 1.0),
        threshold=1e-9,
        passed=bool(abs(rho.trace() + rho.truncated_mass - 1.0) < 1e-9))]
    rows = []
    for i, s in enumerate(rho.basis.states):
        rows.append(["+".join(map(str, s)), diag[i], counts[i]])
    tables = {"weights": (["occupation", "analytic", "sampled"], rows)}
    derived = {"Z": ff.partition_function_discrete(grid, lam, T),
               "trace": rho.trace(), "truncated_mass": rho.truncated_mass}

    def paint(ax):
        ax.semilogy(diag, "o", label="analytic")
        ax.semilogy(counts, "x", label="sampled")
        ax.set_xlabel("basis state index")
        ax.set_ylabel("weight")
        ax.legend()

    return ExperimentResult(tables, checks, derived, {"weights": paint})


def run_freefield_offdiag(params, seed):
    _require(params, ["m", "lam", "T", "L", "cutoff"])
    full = _grid_from_params(params)
    if full.n_modes < 2:
        raise ConfigError("offdiag experiment needs at least 2 modes in cutoff")
    # spectator modes factor out of the off-diagonal block, so work on the
    # two-mode sub-grid to keep the Fock basis small
    grid = ff.MomentumGrid.explicit(L=full.L, m=full.m, T=full.T,
                                    momenta=[full.modes[0], full.modes[1]])
    lam, T = params["lam"], params["T"]
    t = params.get("truncation", {})
    tr = Truncation(n_max=int(t.get("n_max", 14)),
                    N_max=int(t.get("N_max", 20)),
                    mass_bound=float(t.get("mass_bound", 1e-4)))
    rho = ff.density_offdiagonal(0, 1, grid, lam, T, tr)
    et = ff.etilde_values(grid, lam, T)
    coeff = et[0] * et[1] / ((1.0 + et[0]) * (1.0 + et[1]))
    herm_ok = np.max(np.abs(rho.matrix - _offdiag_conj(grid, lam, T, tr))) < 1e-12
    checks = [mcstats.TestReport(name="adjoint_consistency", statistic=0.0,
                                 threshold=1e-12, passed=bool(herm_ok))]
    rows = [[et[0], et[1], coeff, 1.0 / (1.0 + et[0])]]
    tables = {"coefficients": (["Etilde_p", "Etilde_q", "offdiag_coeff",
                                "diag_coeff"], rows)}
    derived = {"survival_coefficient": coeff}

    def paint(ax):
        ts = np.linspace(0.01, 4 * T, 50)
        cs = [e0 * e1 / ((1 + e0) * (1 + e1))
              for e0, e1 in ((grid.energies[0] / (lam ** 2 * t),
                              grid.energies[1] / (lam ** 2 * t)) for t in ts)]
        ax.plot(ts, cs)
        ax.set_xlabel("T")
        ax.set_ylabel("off-diagonal survival")

    return ExperimentResult(tables, checks, derived, {"survival": paint})


def _offdiag_conj(grid, lam, T, tr):
    swapped = ff.density_offdiagonal(1, 0, grid, lam, T, tr)
    return swapped.matrix.conj().T


def run_freefield_renorm(params, seed):
    _require(params, ["m", "lam_p", "T", "V"])
    scheme = ff.RenormalizationScheme(lam_p=params["lam_p"],
                                      cutoff=params.get("cutoff", 100.0) * params["m"],
                                      m=params["m"])
    T, V = params["T"], params["V"]
    mu = ff.poisson_mean(scheme, T, V)
    z_limit, rungs = ff.renormalized_partition(scheme, T, V)
    rows = [[ratio, lnz, mu, lnz / mu] for ratio, lnz in rungs]
    final_ratio = rows[-1][3]
    checks = [mcstats.TestReport(name="lnz_ladder_final",
                                 statistic=abs(final_ratio - 1.0),
                                 threshold=0.01,
                                 passed=bool(abs(final_ratio - 1.0) < 0.01))]
    law, prungs = ff.vacuum_number_distribution(scheme, T, V, n_max=8)
    pois = law.pmf(np.arange(9))
    prow = []
    for ratio, p0 in prungs:
        for nn in range(9):
            prow.append([ratio, nn, p0[nn], pois[nn]])
    tables = {"lnz_ladder": (["cutoff_over_m", "lnz", "mu", "ratio"], rows),
              "p0_ladder": (["cutoff_over_m", "n", "p0_cutoff", "poisson"], prow)}
    derived = {"mu": mu, "Z_limit": z_limit}

    def paint(ax):
        r = np.array(rows)
        ax.semilogx(r[:, 0], r[:, 3], "o-")
        ax.axhline(1.0, color="k", lw=0.5)
        ax.set_xlabel("cutoff / m")
        ax.set_ylabel("ln Z / mu")

    return ExperimentResult(tables, checks, derived, {"ladder": paint})


def run_freefield_rates(params, seed):
    _require(params, ["m", "lam_p", "T", "L", "cutoff"])
    # the scheme cutoff sets the renormalization scale and should sit far
    # above the mass for the closed-form total rate to apply
    scheme_cut = params.get("scheme_cutoff", 100.0 * params["m"])
    scheme = ff.RenormalizationScheme(lam_p=params["lam_p"],
                                      cutoff=scheme_cut, m=params["m"])
    grid = _grid_from_params(params)
    rates, total = ff.generation_rates(scheme, grid)
    riemann = ff.total_rate_riemann(scheme, grid.V)
    rel = abs(riemann - total) / total if total else 0.0
    checks = [mcstats.TestReport(name="total_rate_riemann",
                                 statistic=rel, threshold=0.01,
                                 passed=bool(rel < 0.01))]
    rows = [[*grid.modes[k], grid.energies[k], rates[k]]
            for k in range(grid.n_modes)]
    tables = {"rates": (["px", "py", "pz", "E", "dn_dt"], rows)}
    derived = {"total_rate": total, "riemann_rate": riemann,
               "mu_check": total * 2 * params["T"]}

    def paint(ax):
        r = np.array(rows)
        ax.plot(r[:, 3], r[:, 4], "o")
        ax.set_xlabel("E_p")
        ax.set_ylabel("dn_p/dt")

    return ExperimentResult(tables, checks, derived, {"rates": paint})


# ---------------------------------------------------------------------------
# phi4 and noise
# ---------------------------------------------------------------------------

def run_phi4_collide(params, seed):
    _require(params, ["m", "lam_p", "g", "T", "L", "cutoff"])
    m = params["m"]
    scheme = ff.RenormalizationScheme(lam_p=params["lam_p"],
                                      cutoff=params["cutoff"], m=m)
    grid = _grid_from_params(params)
    T, V = params["T"], grid.V
    cfg = phi4.Phi4Config(g=params["g"], scheme=scheme, grid=grid,
                          eta=grid.dp0)
    z = phi4.renormalized_z(scheme, T, V)

    b = 2.0 * np.pi / grid.L
    p1 = np.array([b, 0.0, 0.0])
    p2 = np.array([-b, 0.0, 0.0])
    pairs = [((p1, p2), (p1, p2)),
             ((np.array([0.0, b, 0.0]), np.array([0.0, -b, 0.0])), (p1, p2))]
    rows = []
    for out_pair, conj_pair in pairs:
        val = phi4.rho_two_particle_block(p1, p2, out_pair, conj_pair, cfg,
                                          T=T, V=V)
        s = phi4.tree_amplitude_2to2(p1, p2, out_pair[0], out_pair[1],
                                     cfg.g, grid)
        sc = phi4.tree_amplitude_2to2(p1, p2, conj_pair[0], conj_pair[1],
                                      cfg.g, grid)
        conventional = s * np.conj(sc)
        rows.append([str(np.round(out_pair[0], 3)), str(np.round(conj_pair[0], 3)),
                     abs(val), abs(conventional), abs(conventional) / z])
    ok = all(abs(r[2] - r[4]) <= 1e-12 * max(1.0, abs(r[4])) for r in rows)
    checks = [mcstats.TestReport(name="two_particle_block_1_over_z",
                                 statistic=0.0 if ok else 1.0,
                                 threshold=1e-12, passed=bool(ok))]

    ladder_rows = []
    _, internal = phi4.dot_internal_factor(+1, scheme)
    _, mixed = phi4.dot_mixed_factor(scheme, T)
    _, dressed = phi4.dressed_external_suppression(p1, scheme, T)
    for (r1, v1), (r2, v2), (r3, v3) in zip(internal, mixed, dressed):
        ladder_rows.append([r1, abs(v1), abs(v2), v3])
    tables = {"two_particle_block": (["out", "conj", "stochastic",
                                      "conventional", "conventional_over_Z"],
                                     rows),
              "dot_ladders": (["cutoff_over_m", "internal", "mixed",
                               "dressed_external"], ladder_rows)}
    derived = {"Z": z, "bare_lam": scheme.bare_lam(), "d3p": grid.d3p}

    def paint(ax):
        r = np.array(ladder_rows)
        ax.loglog(r[:, 0], r[:, 1], "o-", label="internal")
        ax.loglog(r[:, 0], r[:, 2], "s-", label="mixed")
        ax.loglog(r[:, 0], r[:, 3], "^-", label="dressed external")
        ax.set_xlabel("cutoff / m")
        ax.set_ylabel("|dot factor|")
        ax.legend()

    return ExperimentResult(tables, checks, derived, {"ladders": paint})


def run_noise_selftest(params, seed):
    _require(params, ["T", "L", "Nt", "Nx", "n_draws"])
    lat = noise.SpacetimeLattice(Nt=int(params["Nt"]), Nx=int(params["Nx"]),
                                 Ny=int(params["Nx"]), Nz=int(params["Nx"]),
                                 T=params["T"], L=params["L"])
    n = int(params["n_draws"])
    tv = lat.T * lat.V
    re_samples = np.empty(n)
    parseval = np.empty(n)
    for i in range(n):
        field = noise.sample_spacetime_noise(lat, stream_rng(seed, "noise", i))
        modes = noise.fourier_modes(field)
        re_samples[i] = modes.w[1, 0, 0, 0].real
        parseval[i] = abs(modes.mode_power() - field.site_power()) \
            / max(field.site_power(), 1e-300)
    var_est = mcstats.estimate_from_samples(re_samples ** 2)
    checks = [
        mcstats.moment_test("variance_re_w", var_est, tv),
        mcstats.TestReport(name="parseval_identity",
                           statistic=float(parseval.max()), threshold=1e-10,
                           passed=bool(parseval.max() < 1e-10)),
    ]
    # coarse-grained draws vs direct draws on the coarse lattice
    coarse = noise.SpacetimeLattice(Nt=lat.Nt // 2, Nx=lat.Nx // 2,
                                    Ny=lat.Ny // 2, Nz=lat.Nz // 2,
                                    T=lat.T, L=lat.L)
    a = np.array([noise.coarse_grain(
        noise.sample_spacetime_noise(lat, stream_rng(seed, "cg_a", i)), 2
    ).values[0, 0, 0, 0] for i in range(max(n, 100))])
    bvals = np.array([noise.sample_spacetime_noise(
        coarse, stream_rng(seed, "cg_b", i)).values[0, 0, 0, 0]
        for i in range(max(n, 100))])
    checks.append(mcstats.ks_two_sample(a, bvals, name="coarse_grain_ks"))
    rows = [[tv, var_est.mean, var_est.stderr, float(parseval.max())]]
    tables = {"summary": (["TV", "var_re_w", "var_stderr",
                           "parseval_max_rel"], rows)}
    derived = {"TV": tv, "d4x": lat.d4x}

    def paint(ax):
        ax.hist(re_samples / np.sqrt(tv), bins=30, density=True)
        xs = np.linspace(-4, 4, 200)
        ax.plot(xs, np.exp(-xs ** 2 / 2) / np.sqrt(2 * np.pi))
        ax.set_xlabel("Re W / sqrt(TV)")

    return ExperimentResult(tables, checks, derived, {"histogram": paint})


# ---------------------------------------------------------------------------
# catalog
# ---------------------------------------------------------------------------

CATALOG = {
    "oscillator": {
        "runner": run_oscillator,
        "summary": "Stochastic oscillator: decoherence law and packet width.",
        "schema": {"m": "mass", "omega": "trap frequency (0 for free)",
                   "lam": "noise coupling", "t_final": "evolution time",
                   "n_steps": "time steps", "n_paths": "MC paths",
                   "sigma0": "initial packet width (optional)"},
        "references": ["off-diagonal decay exp{-(lam^2/2)(x-y)^2 t}",
                       "width sigma(t) = sigma0 sqrt(1 + t^2/(m^2 sigma0^4))"],
    },
    "freefield.vacuum": {
        "runner": run_freefield_vacuum,
        "summary": "Vacuum-driven coherent states: occupancies and E|S00|^2.",
        "schema": {"m": "mass", "lam": "bare coupling", "T": "half window",
                   "L": "box side", "cutoff": "momentum cutoff",
                   "n_samples": "noise draws"},
        "references": ["E[|S00|^2] = 1/Z with Z = prod (1+Etilde)/Etilde",
                       "mean occupancy 1/Etilde_p per mode"],
    },
    "freefield.single": {
        "runner": run_freefield_single,
        "summary": "Single-particle initial state: dressed density weights.",
        "schema": {"m": "mass", "lam": "bare coupling", "T": "half window",
                   "L": "box side", "cutoff": "momentum cutoff",
                   "n_samples": "noise draws",
                   "truncation": "optional {n_max, N_max, mass_bound}"},
        "references": ["weight factor (1 + Etilde_p^2 m_p)/(1 + Etilde_p)"],
    },
    "freefield.offdiag": {
        "runner": run_freefield_offdiag,
        "summary": "Off-diagonal element survival under noise averaging.",
        "schema": {"m": "mass", "lam": "bare coupling", "T": "half window",
                   "L": "box side", "cutoff": "momentum cutoff"},
        "references": ["survival coefficient Etilde_p Etilde_q /"
                       " ((1+Etilde_p)(1+Etilde_q))"],
    },
    "freefield.renorm": {
        "runner": run_freefield_renorm,
        "summary": "Coupling renormalization: ln Z cutoff ladder and P0(n).",
        "schema": {"m": "mass", "lam_p": "physical coupling",
                   "T": "half window", "V": "box volume",
                   "cutoff": "final cutoff over m (optional)"},
        "references": ["ln Z -> T V m^2 lam_p^2 / (4 pi^2)",
                       "P0(n) Poisson with mu = T V m^2 lam_p^2/(4 pi^2)"],
    },
    "freefield.rates": {
        "runner": run_freefield_rates,
        "summary": "Particle generation rates per mode and in total.",
        "schema": {"m": "mass", "lam_p": "physical coupling",
                   "T": "half window", "L": "box side",
                   "cutoff": "momentum cutoff",
                   "scheme_cutoff": "renormalization cutoff (optional)"},
        "references": ["dn_p/dt = lam_p^2 m^2 V/(2 (2 pi)^3 cutoff^2 E_p)",
                       "dN/dt = lam_p^2 m^2 V / (8 pi^2)"],
    },
    "phi4.collide": {
        "runner": run_phi4_collide,
        "summary": "Two-particle collision: 1/Z scaling and dot-factor ladders.",
        "schema": {"m": "mass", "lam_p": "physical coupling",
                   "g": "quartic coupling", "T": "half window",
                   "L": "box side", "cutoff": "momentum cutoff"},
        "references": ["rho^g two-particle block = (1/Z) S|_{lam=0} conj(S|_{lam=0})",
                       "dot factors vanish as the cutoff grows"],
    },
    "noise.selftest": {
        "runner": run_noise_selftest,
        "summary": "Noise-field statistics: Var(Re W) = TV, Parseval, coarse-grain.",
        "schema": {"T": "half window", "L": "box side",
                   "Nt": "time slices", "Nx": "spatial sites per axis",
                   "n_draws": "noise draws"},
        "references": ["Var(Re W(p)) = T V", "mode power equals site power"],
    },
}


def run_experiment(experiment, params, seed):
    if experiment not in CATALOG:
        raise ConfigError(f"unknown experiment: {experiment}")
    return CATALOG[experiment]["runner"](params, seed)
