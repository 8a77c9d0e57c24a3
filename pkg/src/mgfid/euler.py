"""Generalized Euler angles for SO(d) and sparse superoperator assembly.

A rotation factors as ``R = R^(d-1) ... R^(1)`` with
``R^(k) = R_1(t^k_1) ... R_k(t^k_k)`` and ``R_k`` a planar rotation in the
coordinate plane ``(k, k+1)``. Each planar factor has a superoperator that
can be written down entry by entry without evaluating any determinant, so
the full matchgate superoperator is a product of very sparse matrices.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from functools import lru_cache
from typing import IO

import numpy as np
from scipy import sparse

from .clifford import basis_subsets
from .matchgate import Rotation
from .superop import COUNT_THRESHOLD, SparseSuperOp

__all__ = [
    "EulerAngles",
    "planar_rotation",
    "euler_angles",
    "rotation_from_angles",
    "sparse_elementary_superop",
    "euler_factors",
    "assemble_superop_via_euler",
    "alpha_via_euler",
    "write_angle_table",
    "read_angle_table",
]

DEGENERATE_TOL = 1e-12
DUST = 1e-14


@dataclass(frozen=True)
class EulerAngles:
    """Triangular angle family ``angles[k-1][j-1] = t^k_j`` for ``1 <= j <= k < dim``."""

    dim: int
    angles: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        if self.dim < 2:
            raise ValueError("dimension must be at least 2")
        if len(self.angles) != self.dim - 1:
            raise ValueError(f"expected {self.dim - 1} angle rows, got {len(self.angles)}")
        rows = []
        for k, row in enumerate(self.angles, start=1):
            row = tuple(float(t) for t in row)
            if len(row) != k:
                raise ValueError(f"row {k} must hold {k} angles")
            if not 0.0 <= row[0] < 2 * np.pi:
                raise ValueError(f"t^{k}_1 = {row[0]} outside [0, 2pi)")
            for j, t in enumerate(row[1:], start=2):
                if not 0.0 <= t <= np.pi:
                    raise ValueError(f"t^{k}_{j} = {t} outside [0, pi]")
            rows.append(row)
        object.__setattr__(self, "angles", tuple(rows))

    @classmethod
    def zeros(cls, dim: int) -> "EulerAngles":
        return cls(dim, tuple((0.0,) * k for k in range(1, dim)))

    def __getitem__(self, kj: tuple[int, int]) -> float:
        k, j = kj
        return self.angles[k - 1][j - 1]

    def items(self):
        """``(k, j, theta)`` triples in factor order."""
        for k, row in enumerate(self.angles, start=1):
            for j, t in enumerate(row, start=1):
                yield k, j, t

    @property
    def n_nonzero(self) -> int:
        return sum(1 for _, _, t in self.items() if t != 0.0)


def planar_rotation(k: int, theta: float, dim: int) -> np.ndarray:
    """``R_k(theta)``: identity except the (k, k+1) block ``[[c, s], [-s, c]]``."""
    if not 1 <= k < dim:
        raise ValueError(f"plane index {k} outside [1, {dim - 1}]")
    r = np.eye(dim)
    c, s = np.cos(theta), np.sin(theta)
    r[k - 1, k - 1] = r[k, k] = c
    r[k - 1, k] = s
    r[k, k - 1] = -s
    return r


def _level_rotation(row: tuple[float, ...], dim: int) -> np.ndarray:
    out = np.eye(dim)
    for j, t in enumerate(row, start=1):
        if t != 0.0:
            out = out @ planar_rotation(j, t, dim)
    return out


def _column_angles(v: np.ndarray) -> list[float]:
    """Spherical angles of the unit vector ``v`` (length k+1), as ``[t_1, ..., t_k]``."""
    k = v.size - 1
    out = [0.0] * k
    for j in range(k, 1, -1):
        head = np.linalg.norm(v[:j])
        if head < DEGENERATE_TOL:
            # remaining angles unidentifiable; canonical choice is 0
            out[j - 1] = 0.0 if v[j] >= 0 else np.pi
            return out
        out[j - 1] = float(np.arctan2(head, v[j]))
    t1 = float(np.arctan2(v[0], v[1])) % (2 * np.pi)
    out[0] = 0.0 if t1 >= 2 * np.pi else t1
    return out


def euler_angles(r: Rotation | np.ndarray) -> EulerAngles:
    """Peel the rotation column by column, last column first."""
    work = np.array(r, dtype=float)
    dim = work.shape[0]
    if work.shape != (dim, dim) or dim < 2:
        raise ValueError("expected a square matrix of size >= 2")
    if not np.allclose(work @ work.T, np.eye(dim), atol=1e-9) or np.linalg.det(work) < 0:
        raise ValueError("matrix is not special orthogonal")
    rows: list[tuple[float, ...]] = [()] * (dim - 1)
    for k in range(dim - 1, 0, -1):
        row = tuple(_column_angles(work[: k + 1, k]))
        rows[k - 1] = row
        work = _level_rotation(row, dim).T @ work
    return EulerAngles(dim, tuple(rows))


def rotation_from_angles(a: EulerAngles) -> np.ndarray:
    """Special-orthogonal matrix of the angle family (any dimension, odd included)."""
    out = np.eye(a.dim)
    for k in range(1, a.dim):
        out = _level_rotation(a.angles[k - 1], a.dim) @ out
    return out


# -- sparse superoperators -----------------------------------------------------


@lru_cache(maxsize=16)
def _mask_tables(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Bitmask of each basis subset (bit i-1 for generator i) and its inverse."""
    masks = np.array([sum(1 << (i - 1) for i in s) for s in basis_subsets(n)], dtype=np.int64)
    inverse = np.empty(masks.size, dtype=np.int64)
    inverse[masks] = np.arange(masks.size)
    masks.setflags(write=False)
    inverse.setflags(write=False)
    return masks, inverse


def _elementary_coo(k: int, theta: float, n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if not 1 <= k <= 2 * n - 1:
        raise ValueError(f"plane index {k} outside [1, {2 * n - 1}]")
    masks, inverse = _mask_tables(n)
    idx = np.arange(masks.size)
    has_k = (masks >> (k - 1)) & 1
    has_k1 = (masks >> k) & 1
    c, s = np.cos(theta), np.sin(theta)
    # both or neither of k, k+1: fixed by the rotation
    same = has_k == has_k1
    one = ~same
    swapped = inverse[masks[one] ^ (0b11 << (k - 1))]
    sign = np.where(has_k[one] == 1, 1.0, -1.0)
    rows = np.concatenate([idx[same], idx[one], idx[one]])
    cols = np.concatenate([idx[same], idx[one], swapped])
    vals = np.concatenate([np.ones(int(same.sum())), np.full(int(one.sum()), c), sign * s])
    return rows, cols, vals


def sparse_elementary_superop(k: int, theta: float, n: int) -> SparseSuperOp:
    """Superoperator of ``R_k(theta)`` on ``n`` qubits from the generation rules.

    For every subset ``I``: if ``I`` holds both or neither of ``k, k+1`` the
    diagonal entry is 1. If it holds exactly one, the diagonal entry is
    ``cos(theta)`` and the entry at ``J = I`` with ``k <-> k+1`` exchanged is
    ``+sin(theta)`` when ``k in I`` and ``-sin(theta)`` otherwise.
    """
    rows, cols, vals = _elementary_coo(k, theta, n)
    keep = vals != 0.0
    return SparseSuperOp(n, rows[keep], cols[keep], vals[keep])


def euler_factors(a: EulerAngles) -> list[tuple[int, float]]:
    """Nontrivial planar factors ``(plane, theta)`` in application order (rightmost first)."""
    out = []
    for k in range(1, a.dim):
        row = a.angles[k - 1]
        for j in range(k, 0, -1):
            if row[j - 1] != 0.0:
                out.append((j, row[j - 1]))
    return out


def _threshold(m: sparse.csr_matrix, tol: float) -> sparse.csr_matrix:
    m.data[np.abs(m.data) < tol] = 0.0
    m.eliminate_zeros()
    return m


def assemble_superop_via_euler(r: Rotation | np.ndarray, angles: EulerAngles | None = None) -> SparseSuperOp:
    r = np.asarray(r, dtype=float)
    n = r.shape[0] // 2
    if r.shape[0] != 2 * n:
        raise ValueError("rotation dimension must be even")
    if angles is None:
        angles = euler_angles(r)
    dim = 4**n
    prod = sparse.identity(dim, format="csr")
    for plane, theta in euler_factors(angles):
        rows, cols, vals = _elementary_coo(plane, theta, n)
        factor = sparse.csr_matrix((vals, (rows, cols)), shape=(dim, dim))
        prod = _threshold((factor @ prod).tocsr(), DUST)
    coo = prod.tocoo()
    return SparseSuperOp(n, coo.row, coo.col, coo.data)


def alpha_via_euler(r: Rotation | np.ndarray, threshold: float = COUNT_THRESHOLD) -> float:
    sup = assemble_superop_via_euler(r)
    mags = np.sort(np.abs(sup.values))
    mags = mags[mags > threshold]
    if mags.size == 0:
        raise ValueError("superoperator has no nonzero entries")
    return float(mags[0])


# -- text table ------------------------------------------------------------------


def write_angle_table(a: EulerAngles, fh: IO[str] | None = None) -> str | None:
    sink = io.StringIO() if fh is None else fh
    sink.write(f"# dim {a.dim}\n")
    for k, j, t in a.items():
        sink.write(f"{k} {j} {t:.17g}\n")
    return sink.getvalue() if fh is None else None


def read_angle_table(fh: IO[str] | str) -> EulerAngles:
    text = fh if isinstance(fh, str) else fh.read()
    dim = None
    values: dict[tuple[int, int], float] = {}
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            parts = line[1:].split()
            if len(parts) == 2 and parts[0] == "dim":
                dim = int(parts[1])
            continue
        k, j, t = line.split()
        values[int(k), int(j)] = float(t)
    if dim is None:
        dim = max((k for k, _ in values), default=1) + 1
    rows = tuple(tuple(values.get((k, j), 0.0) for j in range(1, k + 1)) for k in range(1, dim))
    return EulerAngles(dim, rows)
