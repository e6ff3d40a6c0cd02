"""Monte Carlo estimation and hypothesis-testing harness.

Estimates carry jackknife standard errors computed over batch means (100 batches
by default), which behaves well for heavy-tailed estimators such as exponentials
of Gaussian quantities.  Test thresholds follow the project-wide convention:
4-sigma for moment tests, p > 0.01 for KS / chi-square tests.
"""
from dataclasses import dataclass, asdict

import numpy as np
from scipy import stats

from .rng import stream_rng

KS_P_THRESHOLD = 0.01
CHI2_P_THRESHOLD = 0.01
SIGMA_THRESHOLD = 4.0


@dataclass(frozen=True)
class Estimate:
    mean: float
    stderr: float
    n_samples: int
    confidence: float = 0.95

    def sigma_distance(self, expected):
        """|mean - expected| in units of the standard error."""
        if self.stderr == 0.0:
            return 0.0 if self.mean == expected else np.inf
        return abs(self.mean - expected) / self.stderr


@dataclass(frozen=True)
class TestReport:
    name: str
    statistic: float
    threshold: float
    passed: bool
    p_value: float | None = None

    def to_dict(self):
        return asdict(self)


def jackknife_stderr(batch_means):
    """Jackknife standard error of the grand mean from batch means."""
    batch_means = np.asarray(batch_means, dtype=float)
    k = len(batch_means)
    if k < 2:
        return 0.0
    total = batch_means.sum()
    leave_one_out = (total - batch_means) / (k - 1)
    center = leave_one_out.mean()
    return np.sqrt((k - 1) / k * np.sum((leave_one_out - center) ** 2))


def mc_estimate(sampler, n, master_seed, label="mc", n_batches=100):
    """Monte Carlo mean of sampler(rng) over n replicas with jackknife errors.

    Each replica gets its own counter-based stream, so the estimate does not
    depend on evaluation order or worker count.
    """
    if n < 2:
        raise ValueError("mc_estimate needs n >= 2")
    values = np.fromiter(
        (sampler(stream_rng(master_seed, label, i)) for i in range(n)),
        dtype=float, count=n)
    n_batches = min(n_batches, n)
    # pairwise summation (numpy default) keeps the reduction deterministic
    batches = np.array_split(values, n_batches)
    batch_means = np.array([b.mean() for b in batches])
    return Estimate(mean=float(values.mean()),
                    stderr=float(jackknife_stderr(batch_means)),
                    n_samples=n)


def estimate_from_samples(values, n_batches=100):
    """Estimate built from an existing array of samples."""
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        raise ValueError("need at least 2 samples")
    n_batches = min(n_batches, values.size)
    batches = np.array_split(values, n_batches)
    batch_means = np.array([b.mean() for b in batches])
    return Estimate(mean=float(values.mean()),
                    stderr=float(jackknife_stderr(batch_means)),
                    n_samples=values.size)


def moment_test(name, estimate, expected, n_sigma=SIGMA_THRESHOLD):
    """TestReport comparing an Estimate against an expected value."""
    d = estimate.sigma_distance(expected)
    return TestReport(name=name, statistic=float(d), threshold=n_sigma,
                      passed=bool(d < n_sigma))


def ks_two_sample(a, b, name="ks_two_sample", p_threshold=KS_P_THRESHOLD):
    """Two-sample Kolmogorov-Smirnov test; passes when p > p_threshold."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size < 30 or b.size < 30:
        raise ValueError("ks_two_sample needs at least 30 samples per side")
    result = stats.ks_2samp(a, b)
    return TestReport(name=name, statistic=float(result.statistic),
                      threshold=p_threshold,
                      passed=bool(result.pvalue > p_threshold),
                      p_value=float(result.pvalue))


def chi_square_fit(counts, probs, name="chi_square_fit",
                   p_threshold=CHI2_P_THRESHOLD, ddof=0):
    """Pearson chi-square test of observed counts against a discrete law.

    probs must sum to 1 over the supplied bins; every expected count must be
    at least 5 (merge tail bins before calling).
    """
    counts = np.asarray(counts, dtype=float)
    probs = np.asarray(probs, dtype=float)
    if counts.shape != probs.shape:
        raise ValueError("counts and probs must have the same shape")
    expected = probs * counts.sum()
    if np.any(expected < 5):
        raise ValueError("expected count below 5 in some bin; merge bins")
    result = stats.chisquare(counts, expected, ddof=ddof)
    return TestReport(name=name, statistic=float(result.statistic),
                      threshold=p_threshold,
                      passed=bool(result.pvalue > p_threshold),
                      p_value=float(result.pvalue))


def merge_tail(counts, probs, min_expected=5.0):
    """Merge trailing histogram bins until all expected counts reach min_expected."""
    counts = list(np.asarray(counts, dtype=float))
    probs = list(np.asarray(probs, dtype=float))
    total = sum(counts)
    while len(counts) > 1 and probs[-1] * total < min_expected:
        counts[-2] += counts[-1]
        probs[-2] += probs[-1]
        counts.pop()
        probs.pop()
    return np.array(counts), np.array(probs)
