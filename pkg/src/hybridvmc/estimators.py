"""Importance-weighted Monte Carlo estimators for energy, forces and Fisher matrix.

Samples are drawn from the Transformer distribution ``p(s)`` and reweighted by
``omega(s) = |<s|phi>|^2 / mean_b |<s_b|phi>|^2`` toward the hybrid Born
distribution.  Batches may hold each distinct configuration once together with
its multiplicity; every mean below is ``(1/B) sum_b count_b * x_b``, which is
identical to summing over the expanded batch.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .pauli import Hamiltonian, MERGE_TOL, bits_to_codes, codes_to_bits


def importance_weights(amp_sq, counts=None) -> np.ndarray:
    """``omega_b = amp_sq_b / mean(amp_sq)`` (mean weighted by ``counts``).

    >>> importance_weights(np.array([1.0, 3.0]))
    array([0.5, 1.5])
    """
    amp_sq = np.asarray(amp_sq, dtype=float)
    if np.any(~(amp_sq > 0)):
        raise ValueError("importance weights need strictly positive |<s|phi>|^2")
    counts = np.ones(len(amp_sq)) if counts is None else np.asarray(counts, dtype=float)
    return amp_sq * (counts.sum() / np.dot(counts, amp_sq))


def local_energy_from_evaluation(bits, targets, elems, log_mod, arg, t_index, s_index):
    """Local energies given log-amplitudes already evaluated on every needed config.

    Parameters
    ----------
    targets, elems : (n, G) arrays
        Output of :meth:`Hamiltonian.connected_batch` for ``bits``.
    log_mod, arg : arrays
        ``ln|Psi|`` and ``arg Psi`` on a table of configurations.
    t_index : (n, G) int array
        Row of each target in that table, or -1 for targets with zero
        amplitude (outside the masked support or negligible matrix element).
    s_index : (n,) int array
        Row of each sample in the table.
    """
    lm_s, ar_s = log_mod[s_index], arg[s_index]
    if not np.all(np.isfinite(lm_s)):
        raise ValueError("local energy requested at a configuration with zero amplitude")
    ok = t_index >= 0
    ti = np.where(ok, t_index, 0)
    ratio = np.exp((log_mod[ti] - lm_s[:, None]) + 1j * (arg[ti] - ar_s[:, None]))
    ratio = np.where(ok & np.isfinite(log_mod[ti]), ratio, 0.0)
    return np.sum(elems * ratio, axis=1)


def local_energy(bits, H: Hamiltonian, wf, shots: int | None = None, rng=None) -> np.ndarray:
    """``E_loc(s) = sum_s' H_{s s'} Psi(s') / Psi(s)`` for each row of ``bits``.

    ``wf`` is anything with an ``evaluate(bits, ...)`` method returning an
    :class:`~hybridvmc.hybrid.Evaluation` (and a ``mask`` attribute).
    Connected configurations outside the masked support contribute zero.
    """
    bits = np.atleast_2d(np.asarray(bits, dtype=np.int64))
    n = bits.shape[1]
    codes = bits_to_codes(bits)
    targets, elems = H.connected_batch(codes)
    keep = np.abs(elems) >= MERGE_TOL
    t_bits = codes_to_bits(targets, n).reshape(-1, n)
    keep &= wf.mask.contains(t_bits).reshape(targets.shape)
    table = np.unique(np.concatenate([codes, targets[keep]]))
    ev = wf.evaluate(codes_to_bits(table, n), shots=shots, rng=rng)
    lp = ev.log_psi
    s_index = np.searchsorted(table, codes)
    t_index = np.where(keep, np.searchsorted(table, targets), -1)
    return local_energy_from_evaluation(bits, targets, elems, lp.log_modulus, lp.arg,
                                        t_index, s_index)


@dataclass
class SampleBatch:
    """Sampled configurations with multiplicities and per-row data.

    Rows are usually distinct configurations; in shot mode each sample is its
    own row (count 1) because its circuit readouts are independent.
    """

    configs: np.ndarray          # (U, N) bits
    counts: np.ndarray           # (U,) multiplicities, sum = B
    log_p: np.ndarray            # (U,)
    amp_sq: np.ndarray           # (U,)
    e_loc: np.ndarray            # (U,) complex
    o_rows: np.ndarray           # (U, P) complex
    weights: np.ndarray = field(default=None)
    shared_cols: np.ndarray = field(default=None)   # columns fixed by the configuration

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.weights is None:
            self.weights = importance_weights(self.amp_sq, self.counts)

    @property
    def size(self) -> int:
        return int(self.counts.sum())


@dataclass
class EstimatorOutput:
    """Energy, variance, force ``F`` and (lazily) Fisher matrix ``S``.

    ``fisher_factor`` is a real ``(2U, P)`` matrix ``Y`` with ``S = Y^T Y`` up
    to rounding; the SR solver uses it directly when ``P`` is large.
    """

    energy: float
    variance: float
    std_error: float
    grad: np.ndarray
    energy_imag: float
    max_weight: float
    o_mean: np.ndarray = field(repr=False)
    _w: np.ndarray = field(repr=False)
    _o: np.ndarray = field(repr=False)
    _groups: np.ndarray = field(repr=False, default=None)
    _shared: np.ndarray = field(repr=False, default=None)

    @cached_property
    def fisher_factor(self) -> np.ndarray:
        # centered, weight-scaled O rows X: S = Re(X^H X) = Y^T Y
        xc = None
        if self._groups is not None and (self._shared is not None
                                         or self._o.shape[0] > self._o.shape[1]):
            xc = _compress_rows(self._o, self.o_mean, self._w, self._groups, self._shared)
        if xc is None:
            xc = (self._o - self.o_mean) * np.sqrt(self._w)[:, None]
        return np.concatenate([xc.real, xc.imag], axis=0)

    @cached_property
    def fisher(self) -> np.ndarray:
        """``S_ij = Re[<w O_i^* O_j> - <w O_i^*><w O_j>]``, symmetrized."""
        wo = self._o * self._w[:, None]
        s = (self._o.conj().T @ wo).real - np.outer(self.o_mean.conj(), self.o_mean).real
        return 0.5 * (s + s.T)


def _compress_rows(o, o_mean, w, groups, shared=None) -> np.ndarray | None:
    """Fewer rows ``R`` with ``R^H R = X^H X`` when rows repeat a configuration.

    ``X = (O - mean) * sqrt(w)``.  Within a group of rows sharing a
    configuration, columns whose ``O`` entries agree (the network part) are
    ``sqrt(w_b) * a`` for one vector ``a``, so the group equals ``G T`` with
    ``G = [sqrt(w) | varying columns]`` and a QR of ``G`` gives an exact factor
    of size ``1 + #varying`` per group.  Returns None when nothing is gained.
    """
    order = np.argsort(groups, kind="stable")
    starts = np.flatnonzero(np.r_[True, np.diff(groups[order]) != 0])
    first = order[starts]
    const = (np.all(o == o[first][groups], axis=0) if shared is None
             else np.asarray(shared, dtype=bool))
    var = np.flatnonzero(~const)
    if len(first) * (1 + len(var)) >= o.shape[0]:
        return None
    sqrt_w = np.sqrt(w)
    x_var = (o[:, var] - o_mean[var]) * sqrt_w[:, None]
    blocks = []
    for rows in np.split(order, starts[1:]):
        g = np.concatenate([sqrt_w[rows, None] + 0j, x_var[rows]], axis=1)
        r = np.linalg.qr(g, mode="r")
        part = np.zeros((r.shape[0], o.shape[1]), dtype=complex)
        part[:, const] = r[:, :1] * (o[rows[0], const] - o_mean[const])
        part[:, var] = r[:, 1:]
        blocks.append(part)
    return np.concatenate(blocks, axis=0)


def estimate(batch: SampleBatch) -> EstimatorOutput:
    """Monte Carlo estimators for one batch.

    ``w = count * omega / B`` are the per-row weights of every mean.
    """
    B = batch.size
    if B < 2:
        raise ValueError("estimators need at least two samples (B >= 2)")
    omega = batch.weights
    w = batch.counts * omega / B
    e = np.asarray(batch.e_loc, dtype=complex)
    o = np.asarray(batch.o_rows, dtype=complex)
    we = w * e
    energy_c = we.sum()
    o_mean = w @ o
    # F_i = 2 Re[<w E O_i^*> - <w E><w O_i^*>]
    grad = 2.0 * (np.conj(we.conj() @ o) - energy_c * o_mean.conj()).real
    x = omega * e.real
    xm = np.dot(batch.counts, x) / B
    variance = float(np.dot(batch.counts, (x - xm) ** 2) / (B - 1))
    return EstimatorOutput(
        energy=float(energy_c.real),
        variance=variance,
        std_error=float(np.sqrt(variance / B)),
        grad=grad,
        energy_imag=float(energy_c.imag),
        max_weight=float(omega.max()),
        o_mean=o_mean,
        _w=w,
        _o=o,
        _groups=np.unique(bits_to_codes(batch.configs), return_inverse=True)[1].reshape(-1),
        _shared=batch.shared_cols,
    )
