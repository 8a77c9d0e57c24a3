"""Pauli-Liouville superoperators in the Clifford-monomial basis.

Rows and columns are indexed by subsets of [2n] ordered by degree and then
lexicographically, so the matrix of a matchgate is block diagonal with one
compound-matrix block ``C_k(R)`` per degree ``k``.
"""

from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass
from functools import cached_property, lru_cache
from math import comb
from typing import IO, Sequence

import numpy as np

from .clifford import (
    basis_subsets,
    block_offsets,
    degree_subsets,
    format_subset,
    global_index,
    monomial_to_pauli,
    parse_subset,
)
from .matchgate import Rotation
from .simulator import NoisyChannel

__all__ = [
    "STORE_THRESHOLD",
    "COUNT_THRESHOLD",
    "SparseSuperOp",
    "BlockDecays",
    "minor_det",
    "compound_matrix",
    "matchgate_superop",
    "brute_force_superop",
    "entanglement_fidelity",
    "oracle_entanglement_fidelity",
    "channel_fidelity",
    "block_decays",
    "sparsity_count",
    "well_conditioning_alpha",
    "write_superop_csv",
    "read_superop_csv",
]

STORE_THRESHOLD = 1e-12
COUNT_THRESHOLD = 1e-10
MAX_DENSE_QUBITS = 6
MAX_ENUMERATED_QUBITS = 8


@dataclass(frozen=True, eq=False)
class SparseSuperOp:
    """Nonzero superoperator entries in coordinate form.

    ``rows``/``cols`` are global basis indices; entries are kept sorted by
    ``(row, col)``.
    """

    n_qubits: int
    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.int64)
        cols = np.asarray(self.cols, dtype=np.int64)
        vals = np.asarray(self.values, dtype=complex)
        if not rows.shape == cols.shape == vals.shape:
            raise ValueError("rows, cols and values must have equal length")
        dim = 4**self.n_qubits
        if rows.size and (rows.min() < 0 or rows.max() >= dim or cols.min() < 0 or cols.max() >= dim):
            raise ValueError("basis index out of range")
        if vals.size and np.max(np.abs(vals)) > 1 + 1e-10:
            raise ValueError("superoperator entry exceeds unit magnitude")
        order = np.lexsort((cols, rows))
        for name, arr in (("rows", rows[order]), ("cols", cols[order]), ("values", vals[order])):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_entries(cls, n_qubits: int, entries: dict) -> "SparseSuperOp":
        keys = list(entries)
        rows = [global_index(i, n_qubits) for i, _ in keys]
        cols = [global_index(j, n_qubits) for _, j in keys]
        return cls(n_qubits, rows, cols, [entries[k] for k in keys])

    @classmethod
    def from_dense(cls, mat: np.ndarray, n_qubits: int, threshold: float = STORE_THRESHOLD) -> "SparseSuperOp":
        mat = np.asarray(mat, dtype=complex)
        r, c = np.nonzero(np.abs(mat) > threshold)
        return cls(n_qubits, r, c, mat[r, c])

    @classmethod
    def identity(cls, n_qubits: int) -> "SparseSuperOp":
        idx = np.arange(4**n_qubits)
        return cls(n_qubits, idx, idx, np.ones(idx.size))

    @property
    def dim(self) -> int:
        return 4**self.n_qubits

    @property
    def nnz(self) -> int:
        return int(self.values.size)

    @cached_property
    def _degrees(self) -> np.ndarray:
        offs = np.array(block_offsets(self.n_qubits))
        return np.searchsorted(offs, np.arange(self.dim), side="right") - 1

    @cached_property
    def block_structured(self) -> bool:
        deg = self._degrees
        return bool(np.all(deg[self.rows] == deg[self.cols]))

    @property
    def is_real(self) -> bool:
        return bool(np.all(self.values.imag == 0))

    def row_degrees(self) -> np.ndarray:
        return self._degrees[self.rows]

    @cached_property
    def entries(self) -> dict[tuple[tuple[int, ...], tuple[int, ...]], complex]:
        subs = basis_subsets(self.n_qubits)
        return {(subs[r], subs[c]): v for r, c, v in zip(self.rows, self.cols, self.values)}

    def __getitem__(self, key) -> complex:
        i, j = key
        r, c = global_index(tuple(i), self.n_qubits), global_index(tuple(j), self.n_qubits)
        lo = np.searchsorted(self.rows, r, side="left")
        hi = np.searchsorted(self.rows, r, side="right")
        pos = lo + np.searchsorted(self.cols[lo:hi], c)
        if pos < hi and self.cols[pos] == c:
            return complex(self.values[pos])
        return 0j

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.dim, self.dim), dtype=complex)
        out[self.rows, self.cols] = self.values
        return out

    def to_scipy(self):
        from scipy import sparse

        return sparse.csr_matrix((self.values, (self.rows, self.cols)), shape=(self.dim, self.dim))

    def block(self, k: int) -> np.ndarray:
        offs = block_offsets(self.n_qubits)
        return self.to_dense()[offs[k] : offs[k + 1], offs[k] : offs[k + 1]]

    def __matmul__(self, other: "SparseSuperOp") -> "SparseSuperOp":
        if other.n_qubits != self.n_qubits:
            raise ValueError("register width mismatch")
        prod = (self.to_scipy() @ other.to_scipy()).tocoo()
        keep = np.abs(prod.data) > STORE_THRESHOLD
        return SparseSuperOp(self.n_qubits, prod.row[keep], prod.col[keep], prod.data[keep])


# -- minors -------------------------------------------------------------------


def _det_laplace(m: np.ndarray) -> np.ndarray:
    """Batched cofactor expansion along the first row (small k only)."""
    k = m.shape[-1]
    if k == 0:
        return np.ones(m.shape[:-2])
    if k == 1:
        return m[..., 0, 0]
    if k == 2:
        return m[..., 0, 0] * m[..., 1, 1] - m[..., 0, 1] * m[..., 1, 0]
    out = np.zeros(m.shape[:-2], dtype=m.dtype)
    for j in range(k):
        sub = np.delete(m[..., 1:, :], j, axis=-1)
        out = out + (-1) ** j * m[..., 0, j] * _det_laplace(sub)
    return out


def _det_small_or_lu(m: np.ndarray) -> np.ndarray:
    if m.shape[-1] <= 4:
        return _det_laplace(m)
    return np.linalg.det(m)


def minor_det(r: Rotation | np.ndarray, I: Sequence[int], J: Sequence[int]) -> float:
    """Signed determinant of ``R`` restricted to rows ``I`` and columns ``J``.

    Zero when ``|I| != |J|``; indices are 1-based.
    """
    r = np.asarray(r, dtype=float)
    if len(I) != len(J):
        return 0.0
    rows = np.asarray(I, dtype=int) - 1
    cols = np.asarray(J, dtype=int) - 1
    return float(_det_small_or_lu(r[np.ix_(rows, cols)]))


@lru_cache(maxsize=64)
def _subset_array(n: int, k: int) -> np.ndarray:
    subs = list(degree_subsets(n, k))
    return np.array(subs, dtype=int).reshape(len(subs), k) - 1


def compound_matrix(r: Rotation | np.ndarray, k: int, chunk: int = 4096) -> np.ndarray:
    """Matrix of all ``k x k`` minors, rows/cols in lexicographic subset order."""
    r = np.asarray(r, dtype=float)
    n = r.shape[0] // 2
    idx = _subset_array(n, k)
    size = idx.shape[0]
    if k == 0:
        return np.ones((1, 1))
    out = np.empty((size, size))
    for start in range(0, size, chunk):
        rows = idx[start : start + chunk]
        # (rows, cols, k, k) stack of submatrices
        sub = r[rows[:, None, :, None], idx[None, :, None, :]]
        out[start : start + chunk] = _det_small_or_lu(sub)
    return out


def matchgate_superop(r: Rotation | np.ndarray, threshold: float = STORE_THRESHOLD) -> SparseSuperOp:
    """Block-diagonal superoperator of the matchgate circuit with rotation ``r``."""
    r = np.asarray(r, dtype=float)
    n = r.shape[0] // 2
    if n > MAX_ENUMERATED_QUBITS:
        raise ValueError(f"full enumeration limited to n <= {MAX_ENUMERATED_QUBITS}")
    offs = block_offsets(n)
    rows, cols, vals = [], [], []
    for k in range(2 * n + 1):
        blk = compound_matrix(r, k)
        i, j = np.nonzero(np.abs(blk) > threshold)
        rows.append(i + offs[k])
        cols.append(j + offs[k])
        vals.append(blk[i, j])
    return SparseSuperOp(n, np.concatenate(rows), np.concatenate(cols), np.concatenate(vals))


# -- brute force --------------------------------------------------------------


@lru_cache(maxsize=8)
def _basis_operators(n: int) -> np.ndarray:
    ops = np.array([monomial_to_pauli(s, n).to_matrix() for s in basis_subsets(n)])
    ops.setflags(write=False)
    return ops


def brute_force_superop(channel: NoisyChannel | np.ndarray, chunk: int = 256) -> np.ndarray:
    """Dense ``chi(I, J) = 2^-n Tr(c_I^dagger Lambda(c_J))`` straight from the definition.

    ``channel`` is a :class:`NoisyChannel` or a unitary matrix.
    """
    if not isinstance(channel, NoisyChannel):
        channel = NoisyChannel.ideal(np.asarray(channel, dtype=complex))
    n = channel.n_qubits
    if n > MAX_DENSE_QUBITS:
        raise ValueError(f"dense superoperator limited to n <= {MAX_DENSE_QUBITS}")
    basis = _basis_operators(n)
    dim = basis.shape[0]
    out = np.empty((dim, dim), dtype=complex)
    conj = basis.conj()
    for start in range(0, dim, chunk):
        mapped = channel.apply(basis[start : start + chunk])
        out[:, start : start + chunk] = np.einsum("iab,jab->ij", conj, mapped) / 2**n
    return out


def oracle_entanglement_fidelity(channel: NoisyChannel, chunk: int = 256) -> float:
    """Exact ``F_e(E, U)`` for a channel ``E = N o U`` against its own ideal ``U``.

    Only the noise part matters: ``F_e = 4^-n sum_P 2^-n Tr(P^dagger N(P))``
    over the monomial basis, which avoids forming the full superoperator.
    """
    n = channel.n_qubits
    if n > MAX_DENSE_QUBITS:
        raise ValueError(f"oracle fidelity limited to n <= {MAX_DENSE_QUBITS}")
    noise = NoisyChannel(n, np.eye(2**n, dtype=complex), channel.stages)
    basis = _basis_operators(n)
    total = 0j
    for start in range(0, basis.shape[0], chunk):
        block = basis[start : start + chunk]
        total += np.einsum("kab,kab->", block.conj(), noise.apply(block))
    return float((total / 2**n / 4**n).real)


# -- fidelities ---------------------------------------------------------------


def _dense(sup) -> np.ndarray:
    if isinstance(sup, SparseSuperOp):
        return sup.to_dense()
    return np.asarray(sup, dtype=complex)


def entanglement_fidelity(sup_u, sup_e, tol: float = 1e-9) -> float:
    """``2^-2n sum conj(chi_U) chi_E``; both arguments sparse or dense."""
    if isinstance(sup_u, SparseSuperOp):
        e = _dense(sup_e)
        if e.shape != (sup_u.dim, sup_u.dim):
            raise ValueError("superoperator dimensions differ")
        total = np.sum(np.conj(sup_u.values) * e[sup_u.rows, sup_u.cols])
        dim = sup_u.dim
    else:
        u, e = _dense(sup_u), _dense(sup_e)
        if u.shape != e.shape:
            raise ValueError("superoperator dimensions differ")
        total = np.sum(np.conj(u) * e)
        dim = u.shape[0]
    fe = total / dim
    if abs(fe.imag) > tol:
        raise ValueError(f"entanglement fidelity has imaginary part {fe.imag:.3g}")
    return float(fe.real)


def channel_fidelity(fe: float, n: int, warn: bool = True) -> float:
    """Average fidelity ``(d F_e + 1) / (d + 1)`` with ``d = 2^n``.

    Estimates can leave [0, 1]; such values pass through, with a warning
    unless ``warn`` is false.
    """
    if warn and not 0.0 <= fe <= 1.0:
        warnings.warn(f"entanglement fidelity {fe} outside [0, 1]", stacklevel=2)
    d = 2**n
    return (d * fe + 1) / (d + 1)


@dataclass(frozen=True)
class BlockDecays:
    """Per-degree overlaps ``lambda'_k`` of the ideal and noisy superoperators."""

    n_qubits: int
    lambda_prime: tuple[float, ...]

    def fidelity(self) -> float:
        n = self.n_qubits
        return sum(comb(2 * n, k) * lam for k, lam in enumerate(self.lambda_prime)) / 4**n


def block_decays(sup_u: SparseSuperOp, sup_e) -> BlockDecays:
    if not sup_u.block_structured:
        raise ValueError("block decays need a block-structured ideal superoperator")
    n = sup_u.n_qubits
    e = _dense(sup_e)
    contrib = np.conj(sup_u.values) * e[sup_u.rows, sup_u.cols]
    sums = np.bincount(sup_u.row_degrees(), weights=contrib.real, minlength=2 * n + 1)
    lam = tuple(float(sums[k] / comb(2 * n, k)) for k in range(2 * n + 1))
    return BlockDecays(n, lam)


def _magnitudes(sup) -> np.ndarray:
    if isinstance(sup, SparseSuperOp):
        return np.abs(sup.values)
    return np.abs(np.asarray(sup)).ravel()


def sparsity_count(sup, threshold: float = COUNT_THRESHOLD) -> int:
    return int(np.count_nonzero(_magnitudes(sup) > threshold))


def well_conditioning_alpha(sup, threshold: float = COUNT_THRESHOLD) -> float:
    """Smallest nonzero entry magnitude."""
    mags = _magnitudes(sup)
    mags = mags[mags > threshold]
    if mags.size == 0:
        raise ValueError("superoperator has no nonzero entries")
    return float(mags.min())


# -- CSV ----------------------------------------------------------------------


def write_superop_csv(sup: SparseSuperOp, fh: IO[str] | None = None) -> str | None:
    """Write ``k,I,J,re,im`` rows in basis order; returns text if ``fh`` is None."""
    sink = io.StringIO() if fh is None else fh
    w = csv.writer(sink, lineterminator="\n")
    w.writerow(["k", "I", "J", "re", "im"])
    subs = basis_subsets(sup.n_qubits)
    n = sup.n_qubits
    for r, c, v in zip(sup.rows, sup.cols, sup.values):
        w.writerow([len(subs[r]), format_subset(subs[r], n), format_subset(subs[c], n), repr(float(v.real)), repr(float(v.imag))])
    return sink.getvalue() if fh is None else None


def read_superop_csv(fh: IO[str] | str, n_qubits: int) -> SparseSuperOp:
    if isinstance(fh, str):
        fh = io.StringIO(fh)
    reader = csv.reader(fh)
    header = next(reader)
    if header != ["k", "I", "J", "re", "im"]:
        raise ValueError(f"unexpected header {header}")
    rows, cols, vals = [], [], []
    for k, si, sj, re_, im_ in reader:
        i = parse_subset(si, n_qubits)
        if len(i) != int(k):
            raise ValueError(f"degree column {k} disagrees with subset {si}")
        rows.append(global_index(i, n_qubits))
        cols.append(global_index(parse_subset(sj, n_qubits), n_qubits))
        vals.append(complex(float(re_), float(im_)))
    return SparseSuperOp(n_qubits, rows, cols, vals)
