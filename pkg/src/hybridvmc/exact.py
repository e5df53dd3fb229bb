"""Dense Hamiltonian assembly and exact ground states for small systems."""
from __future__ import annotations

import numpy as np
import scipy.linalg

from .pauli import Hamiltonian, PauliString

MAX_DENSE_QUBITS = 12
MAX_FULL_EIGH = 2 ** 10
HERMITIAN_TOL = 1e-10

_PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def pauli_matrix(p: PauliString) -> np.ndarray:
    """Kronecker product of single-qubit matrices.

    Qubit 0 is the least significant bit of the basis index, so it is the
    rightmost factor of the Kronecker product.
    """
    out = np.ones((1, 1), dtype=complex)
    for ch in p.label:
        out = np.kron(_PAULI[ch], out)
    return out


def to_dense(H: Hamiltonian) -> np.ndarray:
    """Dense ``2^n x 2^n`` matrix of ``H`` by Kronecker assembly."""
    n = H.n_qubits
    if n > MAX_DENSE_QUBITS:
        raise ValueError(f"dense assembly capped at {MAX_DENSE_QUBITS} qubits, got {n}")
    D = np.zeros((2 ** n, 2 ** n), dtype=complex)
    for c, p in H.terms:
        D += c * pauli_matrix(p)
    return D


def _check_hermitian(D: np.ndarray) -> None:
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise ValueError("expected a square matrix")
    if np.max(np.abs(D - D.conj().T), initial=0.0) > HERMITIAN_TOL:
        raise ValueError("matrix is not Hermitian")


def _eigh_lowest(D):
    w, v = scipy.linalg.eigh(D, subset_by_index=[0, 0])
    return float(w[0]), v[:, 0]


def _power_lowest(D, tol=1e-12, max_iter=200_000, seed=0):
    """Shifted power iteration on ``sigma I - D`` (``sigma`` a Gershgorin bound)."""
    sigma = np.max(np.sum(np.abs(D), axis=1))
    rng = np.random.default_rng(seed)
    v = rng.normal(size=D.shape[0]) + 0j
    v /= np.linalg.norm(v)
    e_old = np.inf
    for _ in range(max_iter):
        dv = D @ v
        e = float(np.vdot(v, dv).real)
        w = sigma * v - dv
        v = w / np.linalg.norm(w)
        if abs(e - e_old) < tol and np.linalg.norm(D @ v - e * v) < 1e-6:
            break
        e_old = e
    # a short Rayleigh-quotient refinement sharpens the tail of the convergence
    for _ in range(3):
        e = float(np.vdot(v, D @ v).real)
        try:
            x = np.linalg.solve(D - (e - 1e-13) * np.eye(len(v)), v)
        except np.linalg.LinAlgError:
            break
        v = x / np.linalg.norm(x)
    return float(np.vdot(v, D @ v).real), v


def ground_state(D: np.ndarray, method: str = "auto") -> tuple[float, np.ndarray]:
    """Lowest eigenvalue and a unit-norm eigenvector of Hermitian ``D``.

    ``method`` is ``"eigh"`` (dense decomposition), ``"power"`` (shifted
    power iteration) or ``"auto"`` (eigh up to 1024 basis states).
    """
    D = np.asarray(D)
    _check_hermitian(D)
    if method == "auto":
        method = "eigh" if D.shape[0] <= MAX_FULL_EIGH else "power"
    if method == "eigh":
        return _eigh_lowest(D)
    if method == "power":
        return _power_lowest(D)
    raise ValueError(f"unknown method {method!r}")


def residual(D: np.ndarray, E: float, v: np.ndarray) -> float:
    """``||D v - E v||``."""
    return float(np.linalg.norm(D @ v - E * v))


def exact_energy(H: Hamiltonian) -> float:
    return ground_state(to_dense(H))[0]
