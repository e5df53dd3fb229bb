"""Autoregressive Transformer amplitude model and feed-forward phase model.

The Transformer reads the extended configuration ``(0, s_1, ..., s_{N-1})``
(a virtual leading zero, then all but the last bit) and emits, at position
``i``, the conditional distribution of bit ``s_{i+1}``.  Blocks are pre-norm:
``x + Attn(LN(x))`` followed by ``x + FFN(LN(x))``.

Optional particle-number masking treats even qubits (0-based) as spin-up and
odd qubits as spin-down orbitals; disallowed next-bit values receive zero
probability and the conditional is renormalized.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import comb

import numpy as np

from . import autodiff as ad
from .pauli import bits_to_codes, codes_to_bits

INIT_STD = 0.02


class InvalidConfiguration(ValueError):
    """A configuration lies outside the symmetry-masked support."""


@dataclass(frozen=True)
class TransformerConfig:
    n_qubits: int
    embed_dim: int
    n_heads: int
    n_blocks: int

    def __post_init__(self):
        if self.n_qubits < 1 or self.embed_dim < 1 or self.n_blocks < 0:
            raise ValueError("invalid Transformer dimensions")
        if self.n_heads < 1 or self.embed_dim % self.n_heads:
            raise ValueError("n_heads must divide embed_dim")


def param_count(cfg: TransformerConfig) -> int:
    """Closed-form Transformer parameter count ``12Td^2 + (10T + N + 7)d + 2``."""
    d, T, n = cfg.embed_dim, cfg.n_blocks, cfg.n_qubits
    return 12 * T * d * d + (10 * T + n + 7) * d + 2


def phase_param_count(n_in: int, hidden) -> int:
    total, width = 0, n_in
    for w in hidden:
        total += w * width + w
        width = w
    return total + width


@dataclass(frozen=True)
class SymmetryMask:
    enabled: bool = False
    n_orbitals: int = 0
    n_up: int = 0
    n_down: int = 0

    def __post_init__(self):
        if self.enabled:
            if self.n_orbitals < 1:
                raise ValueError("masking needs at least one spatial orbital")
            if not (0 <= self.n_up <= self.n_orbitals and 0 <= self.n_down <= self.n_orbitals):
                raise ValueError("N_up and N_down must lie in [0, N_O]")

    def check_qubits(self, n_qubits: int) -> None:
        if self.enabled and n_qubits != 2 * self.n_orbitals:
            raise ValueError(f"mask with N_O={self.n_orbitals} needs {2 * self.n_orbitals} qubits")

    def support_size(self) -> int:
        return comb(self.n_orbitals, self.n_up) * comb(self.n_orbitals, self.n_down)

    def allowed(self, bits: np.ndarray) -> np.ndarray:
        """``(B, N, 2)`` flags: may qubit ``i`` take value 0 / 1 given ``bits[:, :i]``."""
        bits = np.asarray(bits, dtype=np.int64)
        B, n = bits.shape
        out = np.ones((B, n, 2), dtype=bool)
        if not self.enabled:
            return out
        pos = np.arange(n)
        for parity, n_occ in ((0, self.n_up), (1, self.n_down)):
            same = (pos % 2 == parity).astype(np.int64)
            # occupations/vacancies of this spin strictly before position i
            occ = np.cumsum(bits * same, axis=1) - bits * same
            seen = np.cumsum(same) - same
            vac = seen[None, :] - occ
            sel = pos % 2 == parity
            out[:, sel, 1] = (n_occ - occ[:, sel]) > 0
            out[:, sel, 0] = ((self.n_orbitals - n_occ) - vac[:, sel]) > 0
        return out

    def contains(self, bits: np.ndarray) -> np.ndarray:
        bits = np.atleast_2d(np.asarray(bits))
        if not self.enabled:
            return np.ones(bits.shape[0], dtype=bool)
        return (bits[:, 0::2].sum(axis=1) == self.n_up) & (bits[:, 1::2].sum(axis=1) == self.n_down)


def masked_conditionals(raw, history, i: int, mask: SymmetryMask) -> np.ndarray:
    """Apply the particle-number Heaviside rules to one next-bit distribution.

    ``raw`` holds ``(p(0), p(1))`` for qubit ``i`` (0-based) and ``history``
    the ``i`` bits already fixed.
    """
    raw = np.asarray(raw, dtype=float)
    history = list(history)
    if len(history) != i:
        raise ValueError("history length must equal the position index")
    if not mask.enabled:
        return raw.copy()
    padded = np.array([history + [0]], dtype=np.int64)
    ok = mask.allowed(padded)[0, i]
    p = raw * ok
    return p / p.sum()


def _normal(rng, shape):
    return rng.normal(0.0, INIT_STD, size=shape)


class _Module:
    """Ordered parameter store shared by both networks."""

    params: dict[str, ad.Tensor]

    def names(self) -> list[str]:
        return list(self.params)

    def n_params(self) -> int:
        return sum(p.data.size for p in self.params.values())

    def get_vector(self) -> np.ndarray:
        return np.concatenate([p.data.ravel() for p in self.params.values()])

    def set_vector(self, vec: np.ndarray) -> None:
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (self.n_params(),):
            raise ValueError(f"expected {self.n_params()} values, got {vec.shape}")
        off = 0
        for p in self.params.values():
            n = p.data.size
            p.data = vec[off:off + n].reshape(p.shape).copy()
            off += n

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        if set(state) != set(self.params):
            raise ValueError("parameter names do not match")
        for k, v in state.items():
            if v.shape != self.params[k].shape:
                raise ValueError(f"shape mismatch for {k}")
            self.params[k].data = np.array(v, dtype=float)

    def _flat_grads(self, expanded: dict[str, ad.Tensor], batch: int) -> np.ndarray:
        cols = []
        for k in self.params:
            g = expanded[k].grad
            if g is None:
                g = np.zeros((batch,) + self.params[k].shape)
            cols.append(g.reshape(batch, -1))
        return np.concatenate(cols, axis=1)


class Transformer(_Module):
    def __init__(self, cfg: TransformerConfig, rng: np.random.Generator | None = None):
        self.cfg = cfg
        rng = rng if rng is not None else np.random.default_rng(0)
        d, n = cfg.embed_dim, cfg.n_qubits
        spec: list[tuple[str, tuple, str]] = [
            ("qubit_embed", (2, d), "w"),
            ("pos_embed", (n + 1, d), "w"),
        ]
        for b in range(cfg.n_blocks):
            spec += [
                (f"block{b}.ln1.gain", (d,), "one"),
                (f"block{b}.ln1.offset", (d,), "zero"),
                (f"block{b}.attn.wq", (d, d), "w"),
                (f"block{b}.attn.wk", (d, d), "w"),
                (f"block{b}.attn.wv", (d, d), "w"),
                (f"block{b}.attn.wo", (d, d), "w"),
                (f"block{b}.attn.bo", (d,), "zero"),
                (f"block{b}.ln2.gain", (d,), "one"),
                (f"block{b}.ln2.offset", (d,), "zero"),
                (f"block{b}.ffn.w1", (d, 4 * d), "w"),
                (f"block{b}.ffn.b1", (4 * d,), "zero"),
                (f"block{b}.ffn.w2", (4 * d, d), "w"),
                (f"block{b}.ffn.b2", (d,), "zero"),
            ]
        spec += [
            ("final_ln.gain", (d,), "one"),
            ("final_ln.offset", (d,), "zero"),
            ("head.w", (d, 2), "w"),
            ("head.b", (2,), "zero"),
        ]
        init = {"w": lambda s: _normal(rng, s), "one": np.ones, "zero": np.zeros}
        self.params = {name: ad.param(init[kind](shape), name) for name, shape, kind in spec}
        if self.n_params() != param_count(cfg):
            raise AssertionError("instantiated parameter count disagrees with param_count")

    # -- forward ----------------------------------------------------------------
    def _forward(self, tokens: np.ndarray, per_sample: bool):
        """Logits ``(B, L, 2)`` for integer tokens ``(B, L)``."""
        cfg = self.cfg
        B, L = tokens.shape
        d, H = cfg.embed_dim, cfg.n_heads
        dh = d // H
        if per_sample:
            P = {k: ad.expand_batch(v, B) for k, v in self.params.items()}
        else:
            P = self.params

        def linear(x, w, b=None):
            if per_sample:
                y = x @ P[w]
                if b is not None:
                    y = y + ad.reshape(P[b], (B, 1, -1))
                return y
            k = P[w].shape[-1]
            y = ad.reshape(x, (B * L, x.shape[-1])) @ P[w]
            if b is not None:
                y = y + P[b]
            return ad.reshape(y, (B, L, k))

        def norm(x, prefix):
            return ad.layer_norm(x, P[prefix + ".gain"], P[prefix + ".offset"])

        x = ad.embedding(P["qubit_embed"], tokens)
        pos = P["pos_embed"]
        x = x + (pos[:, :L] if per_sample else pos[:L])
        causal = np.triu(np.ones((L, L), dtype=bool), k=1)
        for b in range(cfg.n_blocks):
            pre = f"block{b}"
            h = norm(x, pre + ".ln1")
            heads = []
            for name in ("wq", "wk", "wv"):
                t = ad.reshape(linear(h, f"{pre}.attn.{name}"), (B, L, H, dh))
                heads.append(ad.transpose(t, (0, 2, 1, 3)))
            q, k, v = heads
            scores = ad.mul(q @ ad.transpose(k, (0, 1, 3, 2)), 1.0 / np.sqrt(dh))
            att = ad.softmax(ad.masked_fill(scores, causal, -np.inf))
            ctx = ad.reshape(ad.transpose(att @ v, (0, 2, 1, 3)), (B, L, d))
            x = x + linear(ctx, f"{pre}.attn.wo", f"{pre}.attn.bo")
            h = norm(x, pre + ".ln2")
            h = ad.relu(linear(h, f"{pre}.ffn.w1", f"{pre}.ffn.b1"))
            x = x + linear(h, f"{pre}.ffn.w2", f"{pre}.ffn.b2")
        x = norm(x, "final_ln")
        return linear(x, "head.w", "head.b"), P

    def _masked_log_cond(self, bits: np.ndarray, mask: SymmetryMask, per_sample=False):
        n = self.cfg.n_qubits
        B = bits.shape[0]
        tokens = np.zeros((B, n), dtype=np.int64)
        tokens[:, 1:] = bits[:, :-1]
        logits, P = self._forward(tokens, per_sample)
        if mask.enabled:
            logits = ad.masked_fill(logits, ~mask.allowed(bits), -np.inf)
        return ad.log_softmax(logits), P

    def infer(self, bits, mask: SymmetryMask = SymmetryMask()):
        """Inference mode: ``(conditionals (B, N, 2), log_p (B,))`` in one pass."""
        bits = np.atleast_2d(np.asarray(bits, dtype=np.int64))
        self._check_bits(bits)
        logc, _ = self._masked_log_cond(bits, mask)
        log_p = np.take_along_axis(logc.data, bits[..., None], axis=-1)[..., 0].sum(axis=1)
        if np.any(np.isneginf(log_p)):
            raise InvalidConfiguration("configuration has zero probability under the mask")
        return np.exp(logc.data), log_p

    def log_prob(self, bits, mask: SymmetryMask = SymmetryMask()) -> np.ndarray:
        """``log p(s)`` per row; ``-inf`` for configurations outside the mask."""
        bits = np.atleast_2d(np.asarray(bits, dtype=np.int64))
        logc, _ = self._masked_log_cond(bits, mask)
        with np.errstate(invalid="ignore"):
            return np.take_along_axis(logc.data, bits[..., None], axis=-1)[..., 0].sum(axis=1)

    def log_prob_grads(self, bits, mask: SymmetryMask = SymmetryMask()):
        """``log p(s)`` and its per-sample gradient rows ``(B, n_params)``."""
        bits = np.atleast_2d(np.asarray(bits, dtype=np.int64))
        logc, P = self._masked_log_cond(bits, mask, per_sample=True)
        per_bit = ad.take_last(logc, bits)
        log_p = ad.tsum(per_bit, axis=1)
        if np.any(np.isneginf(log_p.data)):
            raise InvalidConfiguration("configuration has zero probability under the mask")
        ad.backward(ad.tsum(log_p))
        return log_p.data, self._flat_grads(P, bits.shape[0])

    def _check_bits(self, bits):
        if bits.shape[1] != self.cfg.n_qubits:
            raise ValueError(f"configurations must have {self.cfg.n_qubits} bits")

    # -- sampling -----------------------------------------------------------------
    def sample_counts(self, n_samples: int, mask: SymmetryMask, rng: np.random.Generator):
        """Ancestral sampling of ``n_samples`` configurations.

        Identical prefixes are grouped and split with binomial draws, which
        yields the same distribution as drawing every sample bit by bit.
        Returns ``(bits (U, N), counts (U,), step_log_probs (U, N))``.
        """
        if n_samples < 1:
            raise ValueError("batch size must be >= 1")
        n = self.cfg.n_qubits
        prefix = np.zeros((1, n), dtype=np.int64)
        counts = np.array([n_samples], dtype=np.int64)
        steps = np.zeros((1, n))
        for i in range(n):
            # full-length sequences keep shapes identical to inference mode
            logc, _ = self._masked_log_cond(prefix, mask)
            lp = logc.data[:, i]
            if np.any(np.all(np.isneginf(lp), axis=1)):
                raise RuntimeError("mask left no admissible value for the next qubit")
            p1 = np.exp(lp[:, 1])
            ones = rng.binomial(counts, np.clip(p1, 0.0, 1.0))
            zeros = counts - ones
            child0, child1 = prefix.copy(), prefix.copy()
            child1[:, i] = 1
            s0, s1 = steps.copy(), steps.copy()
            s0[:, i], s1[:, i] = lp[:, 0], lp[:, 1]
            keep0, keep1 = zeros > 0, ones > 0
            prefix = np.concatenate([child0[keep0], child1[keep1]])
            counts = np.concatenate([zeros[keep0], ones[keep1]])
            steps = np.concatenate([s0[keep0], s1[keep1]])
        order = np.argsort(bits_to_codes(prefix), kind="stable")
        return prefix[order], counts[order], steps[order]

    def sample(self, n_samples: int, mask: SymmetryMask, rng: np.random.Generator) -> np.ndarray:
        """``n_samples`` configurations ``(B, N)`` in random order."""
        bits, counts, _ = self.sample_counts(n_samples, mask, rng)
        out = np.repeat(bits, counts, axis=0)
        return out[rng.permutation(len(out))]


class PhaseNet(_Module):
    """``gamma(s) = w_out . ReLU(... ReLU(W_1 s + b_1) ...)``; output layer bias-free."""

    def __init__(self, n_in: int, hidden=(16,), rng: np.random.Generator | None = None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.n_in, self.hidden = n_in, tuple(hidden)
        self.params = {}
        width = n_in
        for i, w in enumerate(self.hidden):
            self.params[f"layer{i}.w"] = ad.param(_normal(rng, (width, w)), f"layer{i}.w")
            self.params[f"layer{i}.b"] = ad.param(np.zeros(w), f"layer{i}.b")
            width = w
        self.params["out.w"] = ad.param(_normal(rng, (width, 1)), "out.w")
        if self.n_params() != phase_param_count(n_in, self.hidden):
            raise AssertionError("phase network parameter count mismatch")

    def _forward(self, bits: np.ndarray, per_sample: bool):
        B = bits.shape[0]
        if per_sample:
            P = {k: ad.expand_batch(v, B) for k, v in self.params.items()}
            x = ad.Tensor(bits[:, None, :].astype(float))
        else:
            P = self.params
            x = ad.Tensor(bits.astype(float))
        for i in range(len(self.hidden)):
            b = P[f"layer{i}.b"]
            if per_sample:
                b = ad.reshape(b, (B, 1, -1))
            x = ad.relu(x @ P[f"layer{i}.w"] + b)
        out = x @ P["out.w"]
        return ad.reshape(out, (B,)), P

    def phase(self, bits) -> np.ndarray:
        bits = np.atleast_2d(np.asarray(bits, dtype=np.int64))
        if bits.shape[1] != self.n_in:
            raise ValueError(f"configurations must have {self.n_in} bits")
        return self._forward(bits, False)[0].data

    def phase_grads(self, bits):
        """``gamma(s)`` and per-sample gradient rows ``(B, n_params)``."""
        bits = np.atleast_2d(np.asarray(bits, dtype=np.int64))
        out, P = self._forward(bits, True)
        ad.backward(ad.tsum(out))
        return out.data, self._flat_grads(P, bits.shape[0])


def enumerate_configs(n: int) -> np.ndarray:
    return codes_to_bits(np.arange(2**n), n).astype(np.int64)
