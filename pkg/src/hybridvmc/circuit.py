"""Statevector simulation of the hardware-efficient ansatz.

The circuit applied to a basis state ``|s>`` is::

    U(theta) = prod_layers [ CNOTs . prod_j RZ(theta^Z_j) RX(theta^X_j) ] . H^{(x)n}

i.e. a Hadamard wall, then per layer an ``RX`` followed by an ``RZ`` on every
qubit and the layer's CNOT ladder.  ``RX(t) = exp(-i t X / 2)`` and
``RZ(t) = exp(-i t Z / 2)``.  Qubit ``q`` has statevector stride ``2**q``.

Two evaluation paths exist: :func:`simulate` and friends operate gate by
gate on one configuration and serve as the reference; :class:`CircuitEvaluator`
evaluates many configurations at once (and all parameter-shifted circuits) for
the training loop.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from .pauli import bits_to_code, codes_to_bits

MAX_QUBITS = 20
MAX_EVALUATOR_QUBITS = 10

SHIFT = np.pi / 2


@dataclass(frozen=True)
class CircuitSpec:
    n_qubits: int
    n_layers: int
    entanglement: Literal["linear", "full"] = "linear"

    def __post_init__(self):
        if not 1 <= self.n_qubits <= MAX_QUBITS:
            raise ValueError(f"n_qubits must be in [1, {MAX_QUBITS}]")
        if self.n_layers < 0:
            raise ValueError("n_layers must be >= 0")
        if self.entanglement not in ("linear", "full"):
            raise ValueError(f"unknown entanglement {self.entanglement!r}")

    def cnot_pairs(self) -> list[tuple[int, int]]:
        """(control, target) pairs of one entangling layer, in application order."""
        n = self.n_qubits
        if self.entanglement == "linear":
            return [(m, m + 1) for m in range(n - 1)]
        return [(m, k) for m in range(n) for k in range(m + 1, n)]

    @property
    def theta_shape(self) -> tuple[int, int, int]:
        return (self.n_layers, self.n_qubits, 2)

    @property
    def n_theta(self) -> int:
        return 2 * self.n_layers * self.n_qubits


@dataclass
class CircuitParams:
    """Rotation angles ``theta[layer, qubit, (X, Z)]`` and readout weights ``coeffs``."""

    theta: np.ndarray
    coeffs: np.ndarray

    def check(self, spec: CircuitSpec) -> None:
        if self.theta.shape != spec.theta_shape:
            raise ValueError(f"theta shape {self.theta.shape} != {spec.theta_shape}")
        if self.coeffs.shape != (spec.n_qubits,):
            raise ValueError(f"coeffs shape {self.coeffs.shape} != ({spec.n_qubits},)")

    @classmethod
    def zeros(cls, spec: CircuitSpec) -> "CircuitParams":
        return cls(np.zeros(spec.theta_shape), np.zeros(spec.n_qubits))

    @classmethod
    def small_random(cls, spec: CircuitSpec, rng: np.random.Generator, scale: float = 0.01):
        return cls(
            rng.uniform(-scale, scale, spec.theta_shape),
            rng.uniform(-scale, scale, spec.n_qubits),
        )

    def copy(self) -> "CircuitParams":
        return CircuitParams(self.theta.copy(), self.coeffs.copy())


def rx(t: float) -> np.ndarray:
    c, s = np.cos(t / 2), np.sin(t / 2)
    return np.array([[c, -1j * s], [-1j * s, c]])


def rz(t: float) -> np.ndarray:
    return np.array([[np.exp(-0.5j * t), 0], [0, np.exp(0.5j * t)]])


HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)


# -- gate-by-gate reference path ----------------------------------------------

def _apply_1q(state: np.ndarray, gate: np.ndarray, q: int, n: int) -> np.ndarray:
    # axis 0 of the (2,)*n tensor is the most significant qubit
    psi = state.reshape((2,) * n)
    psi = np.moveaxis(np.tensordot(gate, psi, axes=([1], [n - 1 - q])), 0, n - 1 - q)
    return psi.reshape(-1)


def _apply_cnot(state: np.ndarray, control: int, target: int) -> np.ndarray:
    idx = np.arange(state.shape[0])
    src = np.where((idx >> control) & 1, idx ^ (1 << target), idx)
    return state[src]


def simulate(spec: CircuitSpec, params: CircuitParams, s) -> np.ndarray:
    """``U(theta)|s>`` as a dense statevector of length ``2**n``."""
    params.check(spec)
    n = spec.n_qubits
    if len(s) != n:
        raise ValueError(f"configuration length {len(s)} != n_qubits {n}")
    state = np.zeros(2**n, dtype=complex)
    state[bits_to_code(s)] = 1.0
    for q in range(n):
        state = _apply_1q(state, HADAMARD, q, n)
    for layer in range(spec.n_layers):
        for q in range(n):
            state = _apply_1q(state, rx(params.theta[layer, q, 0]), q, n)
            state = _apply_1q(state, rz(params.theta[layer, q, 1]), q, n)
        for c, t in spec.cnot_pairs():
            state = _apply_cnot(state, c, t)
    return state


def _z_signs(n: int) -> np.ndarray:
    """``(2**n, n)`` matrix of eigenvalues ``1 - 2 b_i``."""
    return 1.0 - 2.0 * codes_to_bits(np.arange(2**n), n)


def z_expectations(v: np.ndarray) -> np.ndarray:
    n = int(np.log2(v.shape[0]))
    return (np.abs(v) ** 2) @ _z_signs(n)


def sample_shots(v: np.ndarray, M: int, rng: np.random.Generator):
    """Draw ``M`` Z-basis measurements; return ``(bitstrings, z_means)``."""
    if M < 1:
        raise ValueError("shot count must be >= 1")
    n = int(np.log2(v.shape[0]))
    probs = np.abs(v) ** 2
    probs = probs / probs.sum()
    codes = rng.choice(probs.shape[0], size=M, p=probs)
    bits = codes_to_bits(codes, n)
    return bits, (1.0 - 2.0 * bits).mean(axis=0)


def f_value(spec, params, s, shots: int | None = None, rng=None) -> tuple[float, np.ndarray]:
    """``f = sum_i c_i <Z_i>`` and the expectation vector used to compute it.

    ``shots=None`` gives exact expectations; otherwise ``shots`` measurements
    are drawn from ``rng``.
    """
    v = simulate(spec, params, s)
    if shots is None:
        z = z_expectations(v)
    else:
        _, z = sample_shots(v, shots, rng)
    return float(params.coeffs @ z), z


def param_shift_grad(spec, params, s, shots: int | None = None, rng=None) -> np.ndarray:
    """``df/dtheta`` by the two-term shift rule, one fresh evaluation per shift."""
    grad = np.zeros(spec.theta_shape)
    for idx in np.ndindex(*spec.theta_shape):
        vals = []
        for sign in (1.0, -1.0):
            shifted = params.copy()
            shifted.theta[idx] += sign * SHIFT
            vals.append(f_value(spec, shifted, s, shots, rng)[0])
        grad[idx] = 0.5 * (vals[0] - vals[1])
    return grad


# -- batched evaluator ------------------------------------------------------------

def _rx_layer_rows(mat: np.ndarray, angles: np.ndarray, n: int, axis: int) -> np.ndarray:
    """Apply ``prod_q RX(angles[q])`` along ``axis`` (0: left-multiply, 1: right)."""
    k = mat.shape[1 - axis]
    for q in range(n):
        c, s = np.cos(angles[q] / 2), np.sin(angles[q] / 2)
        if axis == 0:
            t = mat.reshape(2 ** (n - 1 - q), 2, 2**q, k)
            lo, hi = t[:, 0].copy(), t[:, 1].copy()
        else:
            t = mat.reshape(k, 2 ** (n - 1 - q), 2, 2**q)
            lo, hi = t[:, :, 0].copy(), t[:, :, 1].copy()
        # RX is symmetric, so right-multiplication uses the same update
        new_lo = c * lo - 1j * s * hi
        new_hi = c * hi - 1j * s * lo
        if axis == 0:
            t[:, 0], t[:, 1] = new_lo, new_hi
        else:
            t[:, :, 0], t[:, :, 1] = new_lo, new_hi
    return mat


@dataclass
class CircuitEval:
    """Results of evaluating one circuit on a set of configurations."""

    z: np.ndarray          # (n, N_q) expectations <Z_i>
    f: np.ndarray          # (n,) weighted sums
    dtheta: np.ndarray     # (m, N_l, N_q, 2) shift-rule gradients for grad_idx


class CircuitEvaluator:
    """Evaluates a fixed circuit on many input configurations.

    Prefix states ``Phi_l = L_l ... L_1 H |s>`` are propagated column-wise and
    the remainder of the circuit after each rotation sub-layer is held as a
    dense matrix, so a shifted circuit costs one matrix product.  Using
    ``R(t +- pi/2) = R(t) (I -+ i P) / sqrt(2)`` the shifted output state is
    ``(psi -+ i W) / sqrt(2)`` with ``W = tail . P_q . prefix``.  In exact
    mode the readout difference is taken from a backward (adjoint) sweep
    instead, which gives the same numbers without the dense tails.
    """

    def __init__(self, spec: CircuitSpec, params: CircuitParams):
        params.check(spec)
        if spec.n_qubits > MAX_EVALUATOR_QUBITS:
            raise ValueError(
                f"batched evaluator supports at most {MAX_EVALUATOR_QUBITS} qubits"
            )
        self.spec, self.params = spec, params
        n, dim = spec.n_qubits, 2**spec.n_qubits
        self.dim = dim
        self.zsign = _z_signs(n)
        self.bits = codes_to_bits(np.arange(dim), n).astype(float)
        idx = np.arange(dim)
        # CNOT layer as a row gather: (C psi)[b] = psi[src[b]]
        src = idx.copy()
        for c, t in spec.cnot_pairs():
            src = src[np.where((idx >> c) & 1, idx ^ (1 << t), idx)]
        self.cnot_src = src
        self.cnot_inv = np.argsort(src)
        self.rz_diag = []
        for layer in range(spec.n_layers):
            phase = np.zeros(dim)
            for q in range(n):
                zq = 1.0 - 2.0 * ((idx >> q) & 1)
                phase = phase - 0.5 * params.theta[layer, q, 1] * zq
            self.rz_diag.append(np.exp(1j * phase))
        self._tails: list[tuple[np.ndarray, np.ndarray]] | None = None

    @property
    def tails(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """``tails[l] = (RX tail, RZ tail)``: dense matrices of everything from
        that sub-layer onwards.  Built on first use (shot-mode gradients only)."""
        if self._tails is None:
            spec, n = self.spec, self.spec.n_qubits
            tails = [None] * spec.n_layers
            t = np.eye(self.dim, dtype=complex)
            for layer in reversed(range(spec.n_layers)):
                t_rz = t[:, self.cnot_inv] * self.rz_diag[layer][None, :]
                t_rx = _rx_layer_rows(t_rz.copy(), self.params.theta[layer, :, 0], n, axis=1)
                tails[layer] = (t_rx, t_rz)
                t = t_rx
            self._tails = tails
        return self._tails

    def _hadamard_columns(self, codes: np.ndarray) -> np.ndarray:
        n = self.spec.n_qubits
        par = np.bitwise_count(np.arange(self.dim)[:, None] & codes[None, :]) & 1
        return (1.0 - 2.0 * par) / np.sqrt(2.0**n) + 0j

    def _forward(self, cols: np.ndarray, keep: bool):
        n = self.spec.n_qubits
        saved = []
        for layer in range(self.spec.n_layers):
            a = _rx_layer_rows(cols.copy(), self.params.theta[layer, :, 0], n, axis=0)
            if keep:
                saved.append((cols, a))
            cols = (a * self.rz_diag[layer][:, None])[self.cnot_src]
        return cols, saved

    def states(self, codes) -> np.ndarray:
        """Output states as columns, shape ``(2**n, len(codes))``."""
        codes = np.asarray(codes, dtype=np.int64)
        return self._forward(self._hadamard_columns(codes), keep=False)[0]

    def _measure(self, probs: np.ndarray, rows: np.ndarray, shots, rng, noise: str) -> np.ndarray:
        """Z readouts, one per entry of ``rows``, from probability columns on axis -2.

        ``probs[..., :, u]`` belongs to distinct input ``u`` and ``rows`` maps
        each execution to its input, so repeated inputs get independent shots.
        ``noise="normal"`` draws the shot mean from a Gaussian with the exact
        single-shot mean and covariance (the large-``shots`` limit of the
        multinomial), which is far cheaper when there are many executions.
        """
        z = np.einsum("...bk,bi->...ki", probs, self.zsign)
        if shots is None:
            return z[..., rows, :]
        if noise == "multinomial":
            lead = probs.shape[:-2]
            sel = np.moveaxis(probs[..., rows], -1, -2).reshape(-1, self.dim)
            sel = np.clip(sel, 0.0, None)
            sel /= sel.sum(axis=1, keepdims=True)
            counts = rng.multinomial(shots, sel)
            zr = 1.0 - 2.0 * (counts @ self.bits) / shots
            return zr.reshape(*lead, len(rows), -1)
        if noise != "normal":
            raise ValueError(f"unknown shot noise model {noise!r}")
        zz = np.einsum("...bk,bi,bj->...kij", probs, self.zsign, self.zsign)
        cov = zz - z[..., :, None] * z[..., None, :]
        lam, vec = np.linalg.eigh(cov)
        root = vec * np.sqrt(np.clip(lam, 0.0, None))[..., None, :]
        xi = rng.standard_normal(z.shape[:-2] + (len(rows), z.shape[-1]))
        noise_z = np.einsum("...kij,...kj->...ki", root[..., rows, :, :], xi)
        return z[..., rows, :] + noise_z / np.sqrt(shots)

    def _measure_f(self, probs: np.ndarray, rows: np.ndarray, shots, rng, noise: str):
        """``f`` readouts only; the normal model then needs one draw per execution."""
        if shots is None or noise != "normal":
            return self._measure(probs, rows, shots, rng, noise) @ self.params.coeffs
        fb = self.zsign @ self.params.coeffs            # f of each single-shot outcome
        mean = np.einsum("...bk,b->...k", probs, fb)
        var = np.clip(np.einsum("...bk,b->...k", probs, fb**2) - mean**2, 0.0, None)
        xi = rng.standard_normal(mean.shape[:-1] + (len(rows),))
        return mean[..., rows] + np.sqrt(var[..., rows] / shots) * xi

    def evaluate(self, codes, grad_idx=None, shots: int | None = None, rng=None,
                 noise: str = "multinomial") -> CircuitEval:
        """Evaluate ``f`` on ``codes`` and shift-rule gradients on ``codes[grad_idx]``.

        Every entry of ``codes`` is one circuit execution: in shot mode each
        entry (and each shifted circuit per gradient entry) draws ``shots``
        fresh samples, even when the same code appears several times.  States
        are simulated once per distinct code.
        """
        spec = self.spec
        n, nl = spec.n_qubits, spec.n_layers
        codes = np.asarray(codes, dtype=np.int64)
        grad_idx = np.arange(0) if grad_idx is None else np.asarray(grad_idx)
        if shots is not None and rng is None:
            raise ValueError("shot mode requires an rng")
        uniq, inv = np.unique(codes, return_inverse=True)
        psi = self.states(uniq)
        z = self._measure(np.abs(psi) ** 2, inv, shots, rng, noise)
        f = z @ self.params.coeffs
        m = len(grad_idx)
        dtheta = np.zeros((m, nl, n, 2))
        if m and nl:
            sub, g_inv = np.unique(codes[grad_idx], return_inverse=True)
            psi_g = psi[:, np.searchsorted(uniq, sub)]
            _, saved = self._forward(self._hadamard_columns(sub), keep=True)
            if shots is None:
                dtheta[:] = self._adjoint_shift(psi_g, saved)[g_inv]
            else:
                self._shifted_readouts(psi_g, saved, g_inv, shots, rng, noise, dtheta)
        return CircuitEval(z=z, f=f, dtheta=dtheta)

    def _shifted_readouts(self, psi_g, saved, g_inv, shots, rng, noise, dtheta) -> None:
        """Shot-mode shift rule: read out every shifted circuit explicitly."""
        n, nl = self.spec.n_qubits, self.spec.n_layers
        bitmask = ((np.arange(self.dim)[:, None] >> np.arange(n)) & 1).astype(bool)
        for layer in range(nl):
            before_rx, before_rz = saved[layer]
            t_rx, t_rz = self.tails[layer]
            for k, (tail, cols) in enumerate(((t_rx, before_rx), (t_rz, before_rz))):
                # P_q cols for every qubit: X flips bit q, Z multiplies by +-1
                if k == 0:
                    idx = np.arange(self.dim)[:, None] ^ (1 << np.arange(n))[None, :]
                    pc = cols[idx.T]                      # (n, dim, u)
                else:
                    pc = np.where(bitmask.T[:, :, None], -cols[None], cols[None])
                w = np.matmul(tail, pc)
                plus = 0.5 * np.abs(psi_g[None] - 1j * w) ** 2
                minus = 0.5 * np.abs(psi_g[None] + 1j * w) ** 2
                fp = self._measure_f(plus, g_inv, shots, rng, noise)
                fm = self._measure_f(minus, g_inv, shots, rng, noise)
                dtheta[:, layer, :, k] = 0.5 * (fp - fm).T

    def _adjoint_shift(self, psi: np.ndarray, saved) -> np.ndarray:
        """Exact shift-rule gradients for distinct inputs, shape ``(u, N_l, N_q, 2)``.

        With ``W = tail . P_q . phi`` the shifted readouts satisfy
        ``(f+ - f-) / 2 = Im <lam|P_q|phi>`` where ``lam = tail^H diag(fb) psi``,
        so one backward sweep replaces the per-qubit shifted circuits.
        """
        n, nl = self.spec.n_qubits, self.spec.n_layers
        fb = self.zsign @ self.params.coeffs
        lam = fb[:, None] * psi
        out = np.zeros((psi.shape[1], nl, n, 2))
        flip = np.arange(self.dim)[:, None] ^ (1 << np.arange(n))[None, :]
        for layer in reversed(range(nl)):
            before_rx, before_rz = saved[layer]
            lam = lam[self.cnot_inv] * np.conj(self.rz_diag[layer])[:, None]
            out[:, layer, :, 1] = (self.zsign.T @ (np.conj(lam) * before_rz)).imag.T
            lam = _rx_layer_rows(lam, -self.params.theta[layer, :, 0], n, axis=0)
            for q in range(n):
                out[:, layer, q, 0] = np.einsum("bu,bu->u", np.conj(lam), before_rx[flip[:, q]]).imag
        return out
