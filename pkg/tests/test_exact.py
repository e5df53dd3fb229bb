import numpy as np
import pytest

from hybridvmc.exact import ground_state, residual, to_dense
from hybridvmc.pauli import Hamiltonian, PauliString, build_afh_chain


def test_identity_and_single_z():
    H = Hamiltonian(2, [(2.0, PauliString.identity(2))])
    np.testing.assert_array_equal(to_dense(H), 2 * np.eye(4))
    Z = Hamiltonian(1, [(1.0, PauliString.from_label("Z"))])
    np.testing.assert_array_equal(to_dense(Z), np.diag([1, -1]))


def test_qubit_order():
    # Z on qubit 0 flips the sign of odd basis indices
    H = Hamiltonian(2, [(1.0, PauliString.from_label("ZI"))])
    np.testing.assert_array_equal(np.diag(to_dense(H)).real, [1, -1, 1, -1])


def test_afh2_spectrum():
    w = np.linalg.eigvalsh(to_dense(build_afh_chain(2, periodic=False)))
    np.testing.assert_allclose(w, [-3, 1, 1, 1], atol=1e-12)


def test_afh4_ground_state_certified():
    D = to_dense(build_afh_chain(4))
    E, v = ground_state(D)
    assert E == pytest.approx(-8, abs=1e-10)
    assert np.linalg.norm(v) == pytest.approx(1.0)
    assert residual(D, E, v) <= 1e-8


def test_afh7_two_methods_agree():
    D = to_dense(build_afh_chain(7))
    e1, v1 = ground_state(D, "eigh")
    e2, v2 = ground_state(D, "power")
    assert abs(e1 - e2) <= 1e-9
    assert residual(D, e2, v2) <= 1e-8


def test_diagonal_matrix():
    D = np.diag([3.0, -2.0, 5.0, 0.5])
    assert ground_state(D)[0] == -2.0
    assert ground_state(D, "power")[0] == pytest.approx(-2.0, abs=1e-10)


def test_residual_detects_wrong_energy():
    D = to_dense(build_afh_chain(4))
    E, v = ground_state(D)
    assert residual(np.eye(4), 1.0, np.ones(4) / 2) == 0.0
    assert residual(D, E + 0.1, v) > 0.05


def test_rejects_non_hermitian_and_oversize():
    with pytest.raises(ValueError):
        ground_state(np.array([[0, 1], [0, 0]]))
    with pytest.raises(ValueError):
        to_dense(Hamiltonian(13, [(1.0, PauliString.identity(13))]))
