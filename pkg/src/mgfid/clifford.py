"""Jordan-Wigner Clifford-algebra generators and their Pauli-string images.

Pauli strings use the symplectic layout: an X bitmask, a Z bitmask and a
phase exponent ``e`` so that the operator is ``i**e`` times the tensor
product of letters, with ``(x, z) = (1, 1)`` read as ``Y``. Bit ``q`` of
either mask refers to qubit ``q`` counted from the left (qubit 0 is the
most significant factor of the Kronecker product).

Generator and subset indices are 1-based, as in ``c_1, ..., c_2n``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from math import comb
from typing import Iterable, Iterator, Sequence

import numpy as np

__all__ = [
    "PauliString",
    "CliffordMonomial",
    "jw_generator",
    "monomial_to_pauli",
    "adjoint_sign",
    "subset_rank",
    "rank_to_subset",
    "block_offsets",
    "global_index",
    "index_to_subset",
    "basis_subsets",
    "format_subset",
    "parse_subset",
]

_PHASE_TEXT = {0: "+", 1: "+i", 2: "-", 3: "-i"}
_TEXT_PHASE = {v: k for k, v in _PHASE_TEXT.items()}
_PHASE_VALUE = (1, 1j, -1, -1j)

_SINGLE = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def _popcount(v: int) -> int:
    return bin(v).count("1")


def _product_phase(x1: int, z1: int, x2: int, z2: int) -> int:
    """Exponent of ``i`` picked up by multiplying the letters of two strings."""
    y = x1 & z1
    x = x1 & ~z1
    z = z1 & ~x1
    plus = _popcount(y & z2 & ~x2) + _popcount(x & x2 & z2) + _popcount(z & x2 & ~z2)
    minus = _popcount(y & x2 & ~z2) + _popcount(x & z2 & ~x2) + _popcount(z & x2 & z2)
    return plus - minus


@dataclass(frozen=True)
class PauliString:
    """Phased tensor product of single-qubit Pauli letters."""

    n_qubits: int
    x: int = 0
    z: int = 0
    phase: int = 0

    def __post_init__(self):
        if self.n_qubits < 1:
            raise ValueError("n_qubits must be positive")
        full = (1 << self.n_qubits) - 1
        if self.x & ~full or self.z & ~full:
            raise ValueError("bitmask exceeds register width")
        object.__setattr__(self, "phase", self.phase % 4)

    @classmethod
    def from_letters(cls, letters: str, phase: int = 0) -> "PauliString":
        x = z = 0
        for q, ch in enumerate(letters):
            if ch not in "IXYZ":
                raise ValueError(f"invalid Pauli letter {ch!r}")
            if ch in "XY":
                x |= 1 << q
            if ch in "ZY":
                z |= 1 << q
        return cls(len(letters), x, z, phase)

    @classmethod
    def identity(cls, n_qubits: int) -> "PauliString":
        return cls(n_qubits)

    @classmethod
    def parse(cls, text: str) -> "PauliString":
        """Inverse of ``str``: ``"+iZI"`` -> ``i * Z (x) I``."""
        for prefix in ("+i", "-i", "+", "-"):
            if text.startswith(prefix):
                return cls.from_letters(text[len(prefix):], _TEXT_PHASE[prefix])
        raise ValueError(f"missing phase prefix in {text!r}")

    @property
    def letters(self) -> str:
        out = []
        for q in range(self.n_qubits):
            bx = (self.x >> q) & 1
            bz = (self.z >> q) & 1
            out.append("IZXY"[bx * 2 + bz])
        return "".join(out)

    @property
    def phase_value(self) -> complex:
        return _PHASE_VALUE[self.phase]

    @property
    def support(self) -> frozenset[int]:
        mask = self.x | self.z
        return frozenset(q for q in range(self.n_qubits) if (mask >> q) & 1)

    @property
    def is_identity(self) -> bool:
        return self.x == 0 and self.z == 0

    def __str__(self) -> str:
        return _PHASE_TEXT[self.phase] + self.letters

    def __mul__(self, other: "PauliString") -> "PauliString":
        if not isinstance(other, PauliString):
            return NotImplemented
        if other.n_qubits != self.n_qubits:
            raise ValueError("register width mismatch")
        e = self.phase + other.phase + _product_phase(self.x, self.z, other.x, other.z)
        return PauliString(self.n_qubits, self.x ^ other.x, self.z ^ other.z, e)

    def dagger(self) -> "PauliString":
        # letters are Hermitian, so only the phase conjugates
        return PauliString(self.n_qubits, self.x, self.z, -self.phase)

    def stripped(self) -> "PauliString":
        """The same letters with phase +1."""
        return PauliString(self.n_qubits, self.x, self.z, 0)

    def commutes_with(self, other: "PauliString") -> bool:
        overlap = _popcount(self.x & other.z) + _popcount(self.z & other.x)
        return overlap % 2 == 0

    def to_matrix(self) -> np.ndarray:
        out = np.array([[1.0 + 0j]])
        for ch in self.letters:
            out = np.kron(out, _SINGLE[ch])
        return self.phase_value * out


@dataclass(frozen=True)
class CliffordMonomial:
    """Ordered product ``c_I = c_{i_1} ... c_{i_k}`` of Jordan-Wigner generators."""

    indices: tuple[int, ...]
    n_qubits: int

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if self.n_qubits < 1:
            raise ValueError("n_qubits must be positive")
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ValueError(f"indices must be strictly increasing: {idx}")
        if idx and (idx[0] < 1 or idx[-1] > 2 * self.n_qubits):
            raise ValueError(f"indices out of range [1, {2 * self.n_qubits}]: {idx}")
        object.__setattr__(self, "indices", idx)

    @property
    def degree(self) -> int:
        return len(self.indices)

    def to_pauli(self) -> PauliString:
        return monomial_to_pauli(self)


def jw_generator(i: int, n: int) -> PauliString:
    """Jordan-Wigner generator ``c_i`` on ``n`` qubits.

    ``c_{2k-1} = Z...Z X I...I`` and ``c_{2k} = Z...Z Y I...I`` with the
    X/Y letter on qubit ``k``.
    """
    if not 1 <= i <= 2 * n:
        raise ValueError(f"generator index {i} outside [1, {2 * n}]")
    q = (i - 1) // 2
    zmask = (1 << q) - 1
    bit = 1 << q
    if i % 2:
        return PauliString(n, bit, zmask)
    return PauliString(n, bit, zmask | bit)


@lru_cache(maxsize=65536)
def _monomial_cached(indices: tuple[int, ...], n: int) -> PauliString:
    out = PauliString.identity(n)
    for i in indices:
        out = out * jw_generator(i, n)
    return out


def monomial_to_pauli(m: CliffordMonomial | Sequence[int], n: int | None = None) -> PauliString:
    """Return ``phi_I * P_I`` for the monomial, multiplying left to right."""
    if not isinstance(m, CliffordMonomial):
        if n is None:
            raise TypeError("n is required when passing raw indices")
        m = CliffordMonomial(tuple(m), n)
    return _monomial_cached(m.indices, m.n_qubits)


def adjoint_sign(k: int) -> int:
    """Sign in ``c_I^dagger = s * c_I`` for a degree-``k`` monomial."""
    if k < 0:
        raise ValueError("degree must be non-negative")
    return -1 if (k * (k - 1) // 2) % 2 else 1


def subset_rank(subset: Sequence[int], n: int) -> int:
    """Lexicographic rank of ``subset`` among subsets of [2n] with the same size."""
    N = 2 * n
    k = len(subset)
    rank = 0
    prev = 0
    for t, i in enumerate(subset, start=1):
        if i <= prev or i > N:
            raise ValueError(f"invalid subset {tuple(subset)} for 2n={N}")
        for v in range(prev + 1, i):
            rank += comb(N - v, k - t)
        prev = i
    return rank


def rank_to_subset(rank: int, k: int, n: int) -> tuple[int, ...]:
    N = 2 * n
    if not 0 <= k <= N:
        raise ValueError(f"degree {k} outside [0, {N}]")
    if not 0 <= rank < comb(N, k):
        raise ValueError(f"rank {rank} outside [0, C({N},{k}))")
    out = []
    v = 1
    for t in range(1, k + 1):
        while True:
            block = comb(N - v, k - t)
            if rank < block:
                out.append(v)
                v += 1
                break
            rank -= block
            v += 1
    return tuple(out)


@lru_cache(maxsize=None)
def block_offsets(n: int) -> tuple[int, ...]:
    """Start of each degree block in the global basis ordering (length 2n+2)."""
    offs = [0]
    for k in range(2 * n + 1):
        offs.append(offs[-1] + comb(2 * n, k))
    return tuple(offs)


def global_index(subset: Sequence[int], n: int) -> int:
    return block_offsets(n)[len(subset)] + subset_rank(subset, n)


def index_to_subset(index: int, n: int) -> tuple[int, ...]:
    offs = block_offsets(n)
    if not 0 <= index < offs[-1]:
        raise ValueError(f"basis index {index} out of range")
    k = int(np.searchsorted(offs, index, side="right")) - 1
    return rank_to_subset(index - offs[k], k, n)


@lru_cache(maxsize=None)
def basis_subsets(n: int) -> tuple[tuple[int, ...], ...]:
    """All subsets of [2n], degree-major then lexicographic."""
    return tuple(
        s for k in range(2 * n + 1) for s in itertools.combinations(range(1, 2 * n + 1), k)
    )


def degree_subsets(n: int, k: int) -> Iterator[tuple[int, ...]]:
    return itertools.combinations(range(1, 2 * n + 1), k)


def format_subset(subset: Iterable[int], n: int) -> str:
    """Compact text form: ``(1, 3, 4) -> "134"``; empty set is ``"0"``.

    Registers with 2n >= 10 need multi-digit indices, which are joined by dots.
    """
    subset = tuple(subset)
    if not subset:
        return "0"
    if 2 * n < 10:
        return "".join(str(i) for i in subset)
    return ".".join(str(i) for i in subset)


def parse_subset(text: str, n: int) -> tuple[int, ...]:
    text = text.strip()
    if text == "0":
        return ()
    if 2 * n < 10:
        return tuple(int(ch) for ch in text)
    return tuple(int(t) for t in text.split("."))
