import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stoqft.fock import (FockBasis, Truncation, TruncationError,
                         check_truncation, vector_norm_sq)


def _basis(n_modes=2, n_max=4, N_max=6):
    return FockBasis(n_modes, Truncation(n_max=n_max, N_max=N_max,
                                         mass_bound=1e-6))


def test_state_enumeration_respects_caps():
    b = _basis(2, n_max=2, N_max=3)
    for s in b.states:
        assert max(s) <= 2 and sum(s) <= 3
    assert (0, 0) in b.index
    assert len(set(b.states)) == b.size


def test_ladder_operator_matrix_elements():
    b = _basis()
    a_dag = b.create(0)
    vac = b.vacuum_vector()
    one = a_dag @ vac
    assert vector_norm_sq(one) == pytest.approx(1.0)
    two = a_dag @ one
    assert vector_norm_sq(two) == pytest.approx(2.0)  # sqrt(2)^2
    assert np.max(np.abs(b.destroy(0) - a_dag.conj().T)) == 0.0


def test_commutator_on_interior_states():
    b = _basis(1, n_max=6, N_max=6)
    a = b.destroy(0)
    comm = a @ b.create(0) - b.create(0) @ a
    # canonical commutation holds below the truncation edge
    for n in range(6):
        v = b.occupation_vector((n,))
        np.testing.assert_allclose(comm @ v, v if n < 6 else -6 * v,
                                   atol=1e-12)


def test_number_operator_diagonal():
    b = _basis()
    n0 = b.number(0)
    diag = np.diag(n0).real
    np.testing.assert_allclose(diag, [s[0] for s in b.states])
    assert np.max(np.abs(n0 - np.diag(diag))) == 0.0


def test_coherent_vector_coefficients():
    b = _basis(1, n_max=12, N_max=12)
    alpha = 0.6 - 0.3j
    v = b.coherent_vector([alpha])
    for i, s in enumerate(b.states):
        n = s[0]
        expected = np.exp(-abs(alpha) ** 2 / 2) * alpha ** n \
            / math.sqrt(math.factorial(n))
        assert v[i] == pytest.approx(expected, abs=1e-12)
    assert vector_norm_sq(v) == pytest.approx(1.0, abs=1e-8)


def test_displacement_generator_antihermitian():
    b = _basis()
    g = b.displacement_generator([0.3 + 0.1j, -0.2j])
    assert np.max(np.abs(g + g.conj().T)) < 1e-12


def test_displacement_of_vacuum_is_coherent():
    from scipy.linalg import expm
    b = _basis(1, n_max=20, N_max=20)
    beta = 0.4 + 0.2j
    u = expm(b.displacement_generator([beta]))
    got = u @ b.vacuum_vector()
    np.testing.assert_allclose(got, b.coherent_vector([beta]), atol=1e-10)


def test_check_truncation_raises_beyond_bound():
    check_truncation(1e-7, 1e-6)
    with pytest.raises(TruncationError):
        check_truncation(1e-5, 1e-6)


@settings(max_examples=20, deadline=None)
@given(st.integers(min_value=1, max_value=3),
       st.integers(min_value=1, max_value=4))
def test_occupation_vectors_are_orthonormal(n_modes, n_max):
    b = FockBasis(n_modes, Truncation(n_max=n_max, N_max=n_max,
                                      mass_bound=1e-6))
    mat = np.array([b.occupation_vector(s) for s in b.states])
    np.testing.assert_allclose(mat @ mat.conj().T, np.eye(b.size), atol=1e-12)
