"""Pauli strings, qubit Hamiltonians and their sparse basis-state action.

Configurations are bit sequences ``s = (s_0, ..., s_{n-1})``.  Internally a
configuration is packed into an integer *code* with qubit ``i`` at bit ``i``
(``code = sum_i s_i 2**i``), so qubit 0 is the leftmost entry of the
sequence and the lowest-stride index of a statevector.

A Pauli string is stored symplectically as two bitmasks ``(x, z)``; a qubit
carries ``X`` if only its x-bit is set, ``Z`` if only its z-bit is set and
``Y`` if both are set.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

MERGE_TOL = 1e-12

_PHASES = (1.0 + 0j, 1j, -1.0 + 0j, -1j)


def bits_to_code(bits: Sequence[int]) -> int:
    code = 0
    for i, b in enumerate(bits):
        if b not in (0, 1):
            raise ValueError(f"configuration entries must be 0 or 1, got {b!r}")
        code |= int(b) << i
    return code


def code_to_bits(code: int, n: int) -> tuple[int, ...]:
    return tuple((int(code) >> i) & 1 for i in range(n))


def codes_to_bits(codes: np.ndarray, n: int) -> np.ndarray:
    """Unpack integer codes of shape ``(...)`` into bit arrays ``(..., n)``."""
    codes = np.asarray(codes, dtype=np.int64)
    return ((codes[..., None] >> np.arange(n)) & 1).astype(np.int8)


def bits_to_codes(bits: np.ndarray) -> np.ndarray:
    bits = np.asarray(bits, dtype=np.int64)
    return (bits << np.arange(bits.shape[-1])).sum(axis=-1)


def _popcount(a: np.ndarray | int):
    return np.bitwise_count(np.asarray(a, dtype=np.int64)).astype(np.int64)


@dataclass(frozen=True)
class PauliString:
    """An ``n``-qubit tensor product of single-qubit Paulis (no phase)."""

    n: int
    x: int = 0
    z: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("a Pauli string needs at least one qubit")
        full = (1 << self.n) - 1
        if self.x & ~full or self.z & ~full:
            raise ValueError("mask bits beyond the qubit count")

    @classmethod
    def from_label(cls, label: str) -> "PauliString":
        x = z = 0
        for i, ch in enumerate(label.upper()):
            if ch == "X":
                x |= 1 << i
            elif ch == "Y":
                x |= 1 << i
                z |= 1 << i
            elif ch == "Z":
                z |= 1 << i
            elif ch != "I":
                raise ValueError(f"invalid Pauli letter {ch!r} in {label!r}")
        return cls(len(label), x, z)

    @classmethod
    def identity(cls, n: int) -> "PauliString":
        return cls(n)

    @classmethod
    def single(cls, n: int, letter: str, qubit: int) -> "PauliString":
        label = ["I"] * n
        label[qubit] = letter
        return cls.from_label("".join(label))

    @property
    def label(self) -> str:
        out = []
        for i in range(self.n):
            xb, zb = (self.x >> i) & 1, (self.z >> i) & 1
            out.append("IZXY"[2 * xb + zb])
        return "".join(out)

    @property
    def n_y(self) -> int:
        return int(_popcount(self.x & self.z))

    def __str__(self) -> str:
        return self.label

    def apply(self, code: int) -> tuple[int, complex]:
        """Return ``(code', phase)`` with ``P|code> = phase |code'>``."""
        sign = int(_popcount(code & self.z)) & 1
        k = (self.n_y + 2 * sign) % 4
        return code ^ self.x, _PHASES[k]


def apply_to_basis(p: PauliString, s: Sequence[int]) -> tuple[tuple[int, ...], complex]:
    """Action of a Pauli string on a basis configuration given as bits."""
    if len(s) != p.n:
        raise ValueError(f"configuration length {len(s)} != string length {p.n}")
    code, phase = p.apply(bits_to_code(s))
    return code_to_bits(code, p.n), phase


def _symplectic_mul(x1: int, z1: int, x2: int, z2: int) -> tuple[int, int, int]:
    """``X^x1 Z^z1 X^x2 Z^z2 = (-1)^k X^(x1^x2) Z^(z1^z2)``; returns ``(x, z, k)``."""
    return x1 ^ x2, z1 ^ z2, int(_popcount(z1 & x2)) & 1


class Hamiltonian:
    """Weighted sum of Pauli strings with duplicates merged.

    Terms are kept in canonical order (by ``(x, z)``).  Coefficients below
    ``MERGE_TOL`` in magnitude are dropped.
    """

    def __init__(self, n_qubits: int, terms: Iterable[tuple[complex, PauliString]] = ()):
        if n_qubits < 1:
            raise ValueError("n_qubits must be positive")
        self.n_qubits = int(n_qubits)
        merged: dict[tuple[int, int], complex] = {}
        for coef, p in terms:
            if p.n != self.n_qubits:
                raise ValueError(f"term {p} has {p.n} qubits, expected {self.n_qubits}")
            key = (p.x, p.z)
            merged[key] = merged.get(key, 0.0) + complex(coef)
        self._terms = tuple(
            (c, PauliString(self.n_qubits, x, z))
            for (x, z), c in sorted(merged.items())
            if abs(c) >= MERGE_TOL
        )
        self._groups = None

    @property
    def terms(self) -> tuple[tuple[complex, PauliString], ...]:
        return self._terms

    def __len__(self) -> int:
        return len(self._terms)

    def __iter__(self):
        return iter(self._terms)

    def __repr__(self) -> str:
        return f"Hamiltonian(n_qubits={self.n_qubits}, n_terms={len(self)})"

    def __add__(self, other: "Hamiltonian") -> "Hamiltonian":
        if other.n_qubits != self.n_qubits:
            raise ValueError("qubit counts differ")
        return Hamiltonian(self.n_qubits, self._terms + other._terms)

    def scaled(self, factor: complex) -> "Hamiltonian":
        return Hamiltonian(self.n_qubits, [(factor * c, p) for c, p in self._terms])

    def is_hermitian(self, tol: float = 1e-10) -> bool:
        return all(abs(c.imag) <= tol for c, _ in self._terms)

    def as_dict(self) -> dict[str, complex]:
        return {p.label: c for c, p in self._terms}

    # -- sparse row kernel -------------------------------------------------
    def _build_groups(self):
        if not self._terms:
            empty = np.zeros(0, dtype=np.int64)
            self._groups = (empty, empty, np.zeros(0, complex), empty)
            return
        xs = np.array([p.x for _, p in self._terms], dtype=np.int64)
        zs = np.array([p.z for _, p in self._terms], dtype=np.int64)
        # fold the i^{n_Y} factor of each letter string into its coefficient
        coef = np.array([c * _PHASES[p.n_y % 4] for c, p in self._terms], dtype=complex)
        order = np.argsort(xs, kind="stable")
        xs, zs, coef = xs[order], zs[order], coef[order]
        flips, starts = np.unique(xs, return_index=True)
        self._groups = (flips, zs, coef, starts)

    @property
    def n_groups(self) -> int:
        """Number of distinct flip patterns (X-bitmasks) among the terms."""
        if self._groups is None:
            self._build_groups()
        return len(self._groups[0])

    def connected_batch(self, codes: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Rows of ``H`` for many configurations at once.

        Returns ``(targets, elems)`` of shape ``(n, G)``, one column per flip
        pattern, with ``elems[b, g] = <codes[b]| H |targets[b, g]>``.  Entries
        may be (numerically) zero; callers filter as needed.
        """
        if self._groups is None:
            self._build_groups()
        flips, zs, coef, starts = self._groups
        codes = np.asarray(codes, dtype=np.int64).reshape(-1)
        if len(flips) == 0:
            return np.zeros((len(codes), 0), np.int64), np.zeros((len(codes), 0), complex)
        targets = codes[:, None] ^ flips[None, :]
        # <s|P|s'> with s' = s ^ x: phase evaluated on the ket s'
        term_target = np.repeat(targets, np.diff(np.append(starts, len(zs))), axis=1)
        parity = _popcount(term_target & zs[None, :]) & 1
        vals = coef[None, :] * (1 - 2 * parity)
        elems = np.add.reduceat(vals, starts, axis=1)
        return targets, elems


def connected(s: Sequence[int], H: Hamiltonian) -> list[tuple[tuple[int, ...], complex]]:
    """Nonzero entries ``(s', <s|H|s'>)`` of the row of ``H`` indexed by ``s``."""
    if len(s) != H.n_qubits:
        raise ValueError(f"configuration length {len(s)} != n_qubits {H.n_qubits}")
    targets, elems = H.connected_batch(np.array([bits_to_code(s)]))
    return [
        (code_to_bits(t, H.n_qubits), complex(m))
        for t, m in zip(targets[0], elems[0])
        if abs(m) >= MERGE_TOL
    ]


# -- builders -----------------------------------------------------------------

def build_afh_chain(n: int, J: float = 1.0, periodic: bool = True) -> Hamiltonian:
    """Heisenberg chain ``J sum_<ij> (X_i X_j + Y_i Y_j + Z_i Z_j)``."""
    if n < 2:
        raise ValueError("an AFH chain needs n >= 2 sites")
    edges = {(i, i + 1) for i in range(n - 1)}
    if periodic and n > 2:
        edges.add((0, n - 1))
    terms = []
    for i, j in sorted(edges):
        for letter in "XYZ":
            label = ["I"] * n
            label[i] = label[j] = letter
            terms.append((J, PauliString.from_label("".join(label))))
    return Hamiltonian(n, terms)


@dataclass
class FermionicOperatorList:
    """One- and two-body integrals over spin-orbitals (0-based labels).

    Represents ``sum h_ij c_i^+ c_j + 1/2 sum h_ijkl c_i^+ c_j^+ c_k c_l``.
    """

    one_body: list[tuple[int, int, complex]] = field(default_factory=list)
    two_body: list[tuple[int, int, int, int, complex]] = field(default_factory=list)

    def max_index(self) -> int:
        idx = [max(t[:2]) for t in self.one_body] + [max(t[:4]) for t in self.two_body]
        return max(idx, default=-1)


def _ladder(n: int, j: int, dagger: bool) -> dict[tuple[int, int], complex]:
    # c_j^(+) = 1/2 (X_j -/+ i Y_j) prod_{k<j} Z_k, stored in X^x Z^z form:
    # X_j Z_tail -> (x=1<<j, z=tail); Y_j Z_tail = i X_j Z_j Z_tail
    tail = (1 << j) - 1
    bit = 1 << j
    sgn = -1.0 if dagger else 1.0
    return {
        (bit, tail): 0.5,
        (bit, tail | bit): 0.5 * sgn * 1j * 1j,
    }


def _op_product(ops: list[dict]) -> dict[tuple[int, int], complex]:
    out = {(0, 0): 1.0 + 0j}
    for op in ops:
        nxt: dict[tuple[int, int], complex] = {}
        for (x1, z1), c1 in out.items():
            for (x2, z2), c2 in op.items():
                x, z, k = _symplectic_mul(x1, z1, x2, z2)
                nxt[(x, z)] = nxt.get((x, z), 0.0) + c1 * c2 * (-1) ** k
        out = nxt
    return out


def jordan_wigner(ops: FermionicOperatorList, n_orbitals: int) -> Hamiltonian:
    """Map a second-quantized Hamiltonian to qubits with the JW encoding."""
    if n_orbitals < 1:
        raise ValueError("n_orbitals must be positive")
    if ops.max_index() >= n_orbitals:
        raise ValueError(f"orbital index {ops.max_index()} out of range for {n_orbitals}")
    h1: dict[tuple[int, int], complex] = {}
    for i, j, v in ops.one_body:
        h1[(i, j)] = h1.get((i, j), 0.0) + complex(v)
    for (i, j), v in h1.items():
        if abs(v - np.conj(h1.get((j, i), 0.0))) > 1e-10:
            raise ValueError(f"one-body integrals are not self-adjoint at ({i}, {j})")

    ladders = {
        (j, d): _ladder(n_orbitals, j, d) for j in range(n_orbitals) for d in (True, False)
    }
    acc: dict[tuple[int, int], complex] = {}

    def _accumulate(factor, seq):
        for key, c in _op_product([ladders[k] for k in seq]).items():
            acc[key] = acc.get(key, 0.0) + factor * c

    for (i, j), v in h1.items():
        _accumulate(v, [(i, True), (j, False)])
    for i, j, k, l, v in ops.two_body:
        _accumulate(0.5 * complex(v), [(i, True), (j, True), (k, False), (l, False)])

    terms = []
    for (x, z), c in acc.items():
        # X^x Z^z = (-i)^{n_Y} * (letter string)
        n_y = int(_popcount(x & z))
        coef = c * (-1j) ** n_y
        if abs(coef) >= MERGE_TOL:
            terms.append((coef, PauliString(n_orbitals, x, z)))
    H = Hamiltonian(n_orbitals, terms)
    if not H.is_hermitian(1e-10):
        raise ValueError("fermionic operator list is not Hermitian")
    return Hamiltonian(n_orbitals, [(c.real, p) for c, p in H.terms])


# -- text formats -------------------------------------------------------------

def _content_lines(text: str):
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield lineno, line


def _parse_number(tok: str) -> complex:
    tok = tok.replace("i", "j")
    val = complex(tok)
    return val.real if val.imag == 0 else val


def parse_pauli_hamiltonian(text: str) -> Hamiltonian:
    lines = list(_content_lines(text))
    if not lines or not re.fullmatch(r"nqubits\s+\d+", lines[0][1]):
        raise ValueError("missing 'nqubits <N>' header")
    n = int(lines[0][1].split()[1])
    terms = []
    for lineno, line in lines[1:]:
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"line {lineno}: expected '<coefficient> <string>'")
        coef, label = parts
        if len(label) != n:
            raise ValueError(f"line {lineno}: string {label!r} is not {n} characters")
        terms.append((_parse_number(coef), PauliString.from_label(label)))
    return Hamiltonian(n, terms)


def format_pauli_hamiltonian(H: Hamiltonian) -> str:
    out = [f"nqubits {H.n_qubits}"]
    for c, p in H.terms:
        coef = repr(c.real) if c.imag == 0 else repr(c).strip("()")
        out.append(f"{coef} {p.label}")
    return "\n".join(out) + "\n"


def parse_fermionic(text: str) -> tuple[FermionicOperatorList, int]:
    lines = list(_content_lines(text))
    if not lines or not re.fullmatch(r"norbitals\s+\d+", lines[0][1]):
        raise ValueError("missing 'norbitals <N>' header")
    n = int(lines[0][1].split()[1])
    ops = FermionicOperatorList()
    for lineno, line in lines[1:]:
        parts = line.split()
        kind = parts[0]
        if kind == "1b" and len(parts) == 4:
            i, j = map(int, parts[1:3])
            ops.one_body.append((i, j, _parse_number(parts[3])))
        elif kind == "2b" and len(parts) == 6:
            i, j, k, l = map(int, parts[1:5])
            ops.two_body.append((i, j, k, l, _parse_number(parts[5])))
        else:
            raise ValueError(f"line {lineno}: cannot parse {line!r}")
    return ops, n


def load_hamiltonian(path: str | Path) -> Hamiltonian:
    """Read a Pauli (``nqubits``) or fermionic (``norbitals``) Hamiltonian file."""
    text = Path(path).read_text()
    first = next(_content_lines(text), (0, ""))[1]
    if first.startswith("norbitals"):
        ops, n = parse_fermionic(text)
        return jordan_wigner(ops, n)
    return parse_pauli_hamiltonian(text)


def save_hamiltonian(H: Hamiltonian, path: str | Path) -> None:
    Path(path).write_text(format_pauli_hamiltonian(H))
