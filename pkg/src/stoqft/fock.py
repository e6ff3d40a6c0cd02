"""Truncated occupation-number (Fock) basis for a finite list of modes.

States are occupation tuples (n_1, ..., n_M) with per-mode cap n_max and total
cap N_max, ordered blockwise by total particle number.  All operators are
dense matrices over this basis; bases stay tiny (a few modes) by design.
"""
from dataclasses import dataclass, field
from itertools import product
from math import factorial

import numpy as np


@dataclass(frozen=True)
class Truncation:
    n_max: int = 6
    N_max: int = 8
    mass_bound: float = 1e-6


class TruncationError(ValueError):
    """Raised when the dropped probability mass exceeds the configured bound."""


class FockBasis:

    def __init__(self, n_modes, truncation):
        self.n_modes = n_modes
        self.truncation = truncation
        states = [s for s in product(range(truncation.n_max + 1), repeat=n_modes)
                  if sum(s) <= truncation.N_max]
        states.sort(key=lambda s: (sum(s), s))
        self.states = states
        self.index = {s: i for i, s in enumerate(states)}
        self.size = len(states)

    def totals(self):
        return np.array([sum(s) for s in self.states])

    def vacuum_index(self):
        return self.index[(0,) * self.n_modes]

    def vacuum_vector(self):
        v = np.zeros(self.size, dtype=complex)
        v[self.vacuum_index()] = 1.0
        return v

    def create(self, mode):
        """Matrix of a_dag for one mode (amplitudes above the caps are dropped)."""
        m = np.zeros((self.size, self.size), dtype=complex)
        for i, s in enumerate(self.states):
            lifted = list(s)
            lifted[mode] += 1
            j = self.index.get(tuple(lifted))
            if j is not None:
                m[j, i] = np.sqrt(s[mode] + 1.0)
        return m

    def destroy(self, mode):
        return self.create(mode).conj().T

    def number(self, mode):
        return np.diag([float(s[mode]) for s in self.states]).astype(complex)

    def occupation_vector(self, occ):
        v = np.zeros(self.size, dtype=complex)
        v[self.index[tuple(occ)]] = 1.0
        return v

    def coherent_vector(self, alphas):
        """Product coherent state with per-mode amplitudes alphas.

        Coefficients are the exact infinite-dimensional ones, so the truncated
        norm is below 1; the deficit is the dropped mass.
        """
        alphas = np.asarray(alphas, dtype=complex)
        v = np.zeros(self.size, dtype=complex)
        log_norm = -0.5 * np.sum(np.abs(alphas) ** 2)
        for i, s in enumerate(self.states):
            amp = np.exp(log_norm)
            for mode, n in enumerate(s):
                amp = amp * alphas[mode] ** n / np.sqrt(factorial(n))
            v[i] = amp
        return v

    def displacement_generator(self, betas):
        """Anti-Hermitian generator sum_p (beta_p a_dag_p - beta_p^* a_p)."""
        g = np.zeros((self.size, self.size), dtype=complex)
        for mode, b in enumerate(betas):
            c = self.create(mode)
            g += b * c - np.conj(b) * c.conj().T
        return g


def vector_norm_sq(v):
    return float(np.vdot(v, v).real)


def check_truncation(mass_lost, bound, what="state"):
    if mass_lost > bound:
        raise TruncationError(
            f"{what}: dropped mass {mass_lost:.3e} exceeds bound {bound:.3e}")
