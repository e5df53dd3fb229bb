"""The hybrid wavefunction: circuit amplitude/phase times a neural quantum state.

``ln <s|Psi> = 1/2 ln p(s) + A(s) + i (gamma(s) + f_2(s))`` where ``A = f_1``
(or ``a tanh f_1`` when the amplitude is bounded) and ``f_k`` are the circuit
readouts ``sum_i c_i <s|U_k^+ Z_i U_k|s>``.

The flat parameter vector is laid out by blocks in the fixed order of
:data:`BLOCKS`::

    [ transformer | phase_net | amp_circuit (theta_1, c_1) | phase_circuit (theta_2, c_2) ]

With ``share_theta`` the single angle array lives in the ``amp_circuit`` block
and ``phase_circuit`` holds only ``c_2``.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .circuit import CircuitEvaluator, CircuitParams, CircuitSpec
from .nets import InvalidConfiguration, PhaseNet, SymmetryMask, Transformer

BLOCKS = ("transformer", "phase_net", "amp_circuit", "phase_circuit")
NQS_BLOCKS = ("transformer", "phase_net")
CIRCUIT_BLOCKS = ("amp_circuit", "phase_circuit")


@dataclass
class LogPsi:
    log_modulus: np.ndarray
    arg: np.ndarray

    @property
    def valid(self) -> np.ndarray:
        return np.isfinite(self.log_modulus)


@dataclass
class Evaluation:
    """Everything one training step needs about a set of configurations."""

    bits: np.ndarray
    log_p: np.ndarray
    gamma: np.ndarray
    f_amp: np.ndarray
    f_phase: np.ndarray
    amp: np.ndarray            # A(s): f_amp or a*tanh(f_amp)
    o_rows: np.ndarray | None  # (len(grad_idx), P_active) complex
    grad_idx: np.ndarray

    @property
    def log_psi(self) -> LogPsi:
        return LogPsi(0.5 * self.log_p + self.amp, self.gamma + self.f_phase)

    @property
    def amp_sq(self) -> np.ndarray:
        """``|<s|phi>|^2`` of the circuit factor."""
        return np.exp(2.0 * self.amp)


class HybridWavefunction:
    """Transformer x phase network x (optional) amplitude/phase circuits."""

    def __init__(
        self,
        transformer: Transformer,
        phase_net: PhaseNet,
        circuit_spec: CircuitSpec | None = None,
        amp: CircuitParams | None = None,
        phase: CircuitParams | None = None,
        share_theta: bool = False,
        tanh_a: float | None = None,
        mask: SymmetryMask = SymmetryMask(),
    ):
        n = transformer.cfg.n_qubits
        if phase_net.n_in != n:
            raise ValueError("phase network input width must equal n_qubits")
        mask.check_qubits(n)
        if tanh_a is not None and tanh_a <= 0:
            raise ValueError("rescale factor a must be positive")
        self.n_qubits = n
        self.transformer, self.phase_net = transformer, phase_net
        self.spec = circuit_spec
        if circuit_spec is not None:
            if circuit_spec.n_qubits != n:
                raise ValueError("circuit width must equal n_qubits")
            amp = amp if amp is not None else CircuitParams.zeros(circuit_spec)
            phase = phase if phase is not None else CircuitParams.zeros(circuit_spec)
            amp.check(circuit_spec)
            phase.check(circuit_spec)
            if share_theta:
                phase.theta = amp.theta
        self.amp, self.phase = amp, phase
        self.share_theta = share_theta
        self.tanh_a = tanh_a
        self.mask = mask

    @property
    def has_circuits(self) -> bool:
        return self.spec is not None

    # -- parameter layout -------------------------------------------------------
    def block_sizes(self) -> dict[str, int]:
        sizes = {
            "transformer": self.transformer.n_params(),
            "phase_net": self.phase_net.n_params(),
            "amp_circuit": 0,
            "phase_circuit": 0,
        }
        if self.has_circuits:
            nt, nq = self.spec.n_theta, self.spec.n_qubits
            sizes["amp_circuit"] = nt + nq
            sizes["phase_circuit"] = nq if self.share_theta else nt + nq
        return sizes

    def n_params(self, blocks=BLOCKS) -> int:
        sizes = self.block_sizes()
        return sum(sizes[b] for b in blocks)

    def layout_signature(self) -> str:
        """Checksum of the block layout; guards checkpoints and optimizer state."""
        desc = ";".join(f"{b}={s}" for b, s in self.block_sizes().items())
        desc += f";share={self.share_theta}"
        if self.has_circuits:
            desc += f";circuit={self.spec.n_qubits}x{self.spec.n_layers}:{self.spec.entanglement}"
        return hashlib.sha256(desc.encode()).hexdigest()[:16]

    def _block_vector(self, block: str) -> np.ndarray:
        if block == "transformer":
            return self.transformer.get_vector()
        if block == "phase_net":
            return self.phase_net.get_vector()
        if not self.has_circuits:
            return np.zeros(0)
        if block == "amp_circuit":
            return np.concatenate([self.amp.theta.ravel(), self.amp.coeffs])
        if self.share_theta:
            return self.phase.coeffs.copy()
        return np.concatenate([self.phase.theta.ravel(), self.phase.coeffs])

    def _set_block(self, block: str, vec: np.ndarray) -> None:
        if block == "transformer":
            self.transformer.set_vector(vec)
        elif block == "phase_net":
            self.phase_net.set_vector(vec)
        elif self.has_circuits:
            nt = self.spec.n_theta
            if block == "amp_circuit":
                self.amp.theta[...] = vec[:nt].reshape(self.spec.theta_shape)
                self.amp.coeffs = vec[nt:].copy()
            elif self.share_theta:
                self.phase.coeffs = vec.copy()
            else:
                self.phase.theta = vec[:nt].reshape(self.spec.theta_shape).copy()
                self.phase.coeffs = vec[nt:].copy()

    def get_vector(self, blocks=BLOCKS) -> np.ndarray:
        return np.concatenate([self._block_vector(b) for b in BLOCKS if b in blocks])

    def set_vector(self, vec: np.ndarray, blocks=BLOCKS) -> None:
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (self.n_params(blocks),):
            raise ValueError(f"expected {self.n_params(blocks)} values, got {vec.shape}")
        sizes, off = self.block_sizes(), 0
        for b in BLOCKS:
            if b in blocks:
                self._set_block(b, vec[off:off + sizes[b]])
                off += sizes[b]

    # -- evaluation -----------------------------------------------------------------
    def evaluate(self, bits, grad_idx=None, shots: int | None = None, rng=None,
                 blocks=BLOCKS, noise: str = "multinomial") -> Evaluation:
        """Evaluate the ansatz on ``bits`` and ``O`` rows on ``bits[grad_idx]``.

        Each row is one execution: in shot mode every row runs its circuits
        with fresh shots (repeated rows included), and the same readout feeds
        the amplitude, the phase and the ``O_c`` entries of that row so they
        stay mutually consistent.  Network outputs are computed once per
        distinct row.  Rows outside the symmetry mask get ``log_p = -inf``
        and are never sent to a circuit.  ``noise`` selects the shot model
        (see ``CircuitEvaluator``).
        """
        bits = np.atleast_2d(np.asarray(bits, dtype=np.int64))
        grad_idx = np.arange(0) if grad_idx is None else np.asarray(grad_idx, dtype=np.int64)
        n = len(bits)
        valid = self.mask.contains(bits)
        if not np.all(valid[grad_idx]):
            raise InvalidConfiguration("gradient requested for a masked-out configuration")
        _, first, inv = np.unique((bits << np.arange(bits.shape[1])).sum(axis=1),
                                  return_index=True, return_inverse=True)
        uniq = bits[first]
        u_valid = self.mask.contains(uniq)
        u_log_p = np.full(len(uniq), -np.inf)
        u_log_p[u_valid] = self.transformer.log_prob(uniq[u_valid], self.mask)
        log_p = u_log_p[inv]
        gamma = self.phase_net.phase(uniq)[inv]
        f_amp, f_phase = np.zeros(n), np.zeros(n)
        nq = self.n_qubits
        z_amp = np.zeros((len(grad_idx), nq))
        z_phase = np.zeros((len(grad_idx), nq))
        d_amp = d_phase = None
        need_circ_grad = bool(set(blocks) & set(CIRCUIT_BLOCKS)) and len(grad_idx) > 0
        if self.has_circuits:
            codes = (bits << np.arange(nq)).sum(axis=1)
            vidx = np.flatnonzero(valid)
            # positions of the gradient rows among the valid rows
            pos = np.searchsorted(vidx, grad_idx)
            g_sel = pos if need_circ_grad else None
            res_a = CircuitEvaluator(self.spec, self.amp).evaluate(codes[vidx], g_sel, shots, rng,
                                                                     noise)
            res_p = CircuitEvaluator(self.spec, self.phase).evaluate(codes[vidx], g_sel, shots, rng,
                                                                     noise)
            f_amp[vidx], f_phase[vidx] = res_a.f, res_p.f
            z_amp, z_phase = res_a.z[pos], res_p.z[pos]
            d_amp, d_phase = res_a.dtheta, res_p.dtheta
        amp = f_amp if self.tanh_a is None else self.tanh_a * np.tanh(f_amp)
        o_rows = None
        if len(grad_idx):
            o_rows = self._o_rows(bits[grad_idx], f_amp[grad_idx], z_amp, z_phase,
                                  d_amp, d_phase, blocks)
        return Evaluation(bits, log_p, gamma, f_amp, f_phase, amp, o_rows, grad_idx)

    def _o_rows(self, bits, f_amp, z_amp, z_phase, d_amp, d_phase, blocks) -> np.ndarray:
        m = len(bits)
        # (real part, imaginary part) column pieces, left to right
        pieces = []
        if "transformer" in blocks or "phase_net" in blocks:
            _, first, inv = np.unique((bits << np.arange(bits.shape[1])).sum(axis=1),
                                      return_index=True, return_inverse=True)
            uniq = bits[first]
        if "transformer" in blocks:
            _, g = self.transformer.log_prob_grads(uniq, self.mask)
            pieces.append((0.5 * g[inv], None))
        if "phase_net" in blocks:
            _, g = self.phase_net.phase_grads(uniq)
            pieces.append((None, g[inv]))
        if self.has_circuits:
            scale = np.ones(m) if self.tanh_a is None else self.tanh_a * (1 - np.tanh(f_amp) ** 2)
            dth_a = d_amp.reshape(m, -1) * scale[:, None]
            dth_p = d_phase.reshape(m, -1)
            if "amp_circuit" in blocks:
                pieces.append((dth_a, dth_p if self.share_theta else None))
                pieces.append((z_amp * scale[:, None], None))
            if "phase_circuit" in blocks:
                if not self.share_theta:
                    pieces.append((None, dth_p))
                pieces.append((None, z_phase))
        widths = [(re if re is not None else im).shape[1] for re, im in pieces]
        out = np.zeros((m, sum(widths)), dtype=complex)
        col = 0
        for (re, im), k in zip(pieces, widths):
            if re is not None:
                out.real[:, col:col + k] = re
            if im is not None:
                out.imag[:, col:col + k] = im
            col += k
        return out

    def log_psi(self, bits, shots: int | None = None, rng=None) -> LogPsi:
        return self.evaluate(bits, shots=shots, rng=rng).log_psi

    def o_vector(self, bits, shots: int | None = None, rng=None, blocks=BLOCKS) -> np.ndarray:
        bits = np.atleast_2d(np.asarray(bits, dtype=np.int64))
        ev = self.evaluate(bits, np.arange(len(bits)), shots, rng, blocks)
        return ev.o_rows


class TableWavefunction:
    """Fixed amplitudes indexed by configuration code (oracle fixtures).

    Plays the role of a pure neural state: ``p(s) = |psi(s)|^2 / sum |psi|^2``,
    phase ``arg psi(s)``, and no circuit factor, so importance weights are 1.
    Its parameters are ``ln|psi(s)|`` and ``arg psi(s)`` for every basis
    state, giving ``O(s) = [e_s, i e_s]``.
    """

    def __init__(self, amplitudes: np.ndarray, mask: SymmetryMask = SymmetryMask()):
        amplitudes = np.asarray(amplitudes, dtype=complex)
        self.n_qubits = int(np.log2(len(amplitudes)))
        norm = np.sum(np.abs(amplitudes) ** 2)
        self.amplitudes = amplitudes / np.sqrt(norm)
        self.mask = mask

    def n_params(self, blocks=None) -> int:
        return 2 * len(self.amplitudes)

    def evaluate(self, bits, grad_idx=None, shots=None, rng=None, blocks=(),
                 noise=None) -> Evaluation:
        bits = np.atleast_2d(np.asarray(bits, dtype=np.int64))
        grad_idx = np.arange(0) if grad_idx is None else np.asarray(grad_idx)
        codes = (bits << np.arange(self.n_qubits)).sum(axis=1)
        psi = self.amplitudes[codes]
        with np.errstate(divide="ignore"):
            log_p = np.log(np.abs(psi) ** 2)
        dim = len(self.amplitudes)
        o_rows = np.zeros((len(grad_idx), 2 * dim), dtype=complex)
        rows = np.arange(len(grad_idx))
        o_rows[rows, codes[grad_idx]] = 1.0
        o_rows[rows, dim + codes[grad_idx]] = 1j
        zeros = np.zeros(len(bits))
        return Evaluation(bits, log_p, np.angle(psi), zeros, zeros, zeros, o_rows, grad_idx)

    def log_psi(self, bits, shots=None, rng=None) -> LogPsi:
        return self.evaluate(bits).log_psi

    def o_vector(self, bits, shots=None, rng=None, blocks=()) -> np.ndarray:
        bits = np.atleast_2d(np.asarray(bits, dtype=np.int64))
        return self.evaluate(bits, np.arange(len(bits))).o_rows
