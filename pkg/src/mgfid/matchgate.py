"""Matchgates, their SO(2n) rotations and quadratic Hamiltonians.

Conventions
-----------
* Qubits are numbered from 1 (leftmost tensor factor); a two-qubit gate is
  addressed by its first qubit ``q`` and acts on ``(q, q + 1)``.
* The rotation of a unitary ``U`` is defined by conjugation,
  ``U c_i U^dagger = sum_j R[j, i] c_j``.  With this reading a circuit that
  applies ``U1`` and then ``U2`` has rotation ``R2 @ R1``.
* ``H = i sum_{i != j} h[i, j] c_i c_j``, ``U = exp(-i H)`` and
  ``R = exp(4 h)``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy import linalg as sla

from .clifford import jw_generator

__all__ = [
    "BranchAmbiguityError",
    "NotAMatchgateError",
    "QuadraticHamiltonian",
    "Rotation",
    "MatchgateCircuit",
    "expm_antisymmetric",
    "logm_orthogonal",
    "rotation_from_hamiltonian",
    "hamiltonian_from_rotation",
    "hamiltonian_from_unitary",
    "conjugation_rotation",
    "unitary_from_hamiltonian",
    "unitary_from_rotation",
    "gate_G",
    "matchgate_blocks",
    "is_matchgate",
    "fsim",
    "xy_gate",
    "givens_gate",
    "gate_rotation",
    "circuit_to_rotation",
    "check_xy_structure",
    "check_givens_structure",
    "haar_random_rotation",
    "haar_random_special_orthogonal",
    "random_matchgate",
    "random_matchgate_circuit",
    "random_xy_circuit",
    "random_givens_circuit",
    "parse_circuit",
    "format_circuit",
    "load_circuit",
]


class BranchAmbiguityError(ValueError):
    """Matrix logarithm requested where an eigenvalue sits at -1."""


class NotAMatchgateError(ValueError):
    pass


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


@dataclass(frozen=True)
class QuadraticHamiltonian:
    """Real antisymmetric coefficient matrix of a free-fermion Hamiltonian."""

    h: np.ndarray

    def __post_init__(self):
        h = np.array(self.h, dtype=float)
        if h.ndim != 2 or h.shape[0] != h.shape[1] or h.shape[0] % 2:
            raise ValueError(f"h must be 2n x 2n, got shape {h.shape}")
        if not np.allclose(h + h.T, 0.0, atol=1e-12):
            raise ValueError("h is not antisymmetric")
        h.setflags(write=False)
        object.__setattr__(self, "h", h)

    @property
    def n_qubits(self) -> int:
        return self.h.shape[0] // 2

    def operator(self) -> np.ndarray:
        """The 2^n x 2^n Hermitian operator ``H``."""
        n = self.n_qubits
        gens = _generator_matrices(n)
        out = np.zeros((2**n, 2**n), dtype=complex)
        for i in range(2 * n):
            for j in range(i + 1, 2 * n):
                if self.h[i, j] != 0.0:
                    # h_ij c_i c_j + h_ji c_j c_i = 2 h_ij c_i c_j
                    out += 2j * self.h[i, j] * (gens[i] @ gens[j])
        return out

    def unitary(self) -> np.ndarray:
        return unitary_from_hamiltonian(self)


@dataclass(frozen=True)
class Rotation:
    """Element of SO(2n) describing a matchgate circuit's conjugation action."""

    r: np.ndarray

    def __post_init__(self):
        r = np.array(self.r, dtype=float)
        if r.ndim != 2 or r.shape[0] != r.shape[1] or r.shape[0] % 2:
            raise ValueError(f"rotation must be 2n x 2n, got shape {r.shape}")
        if not np.allclose(r.T @ r, np.eye(r.shape[0]), atol=1e-10):
            raise ValueError("matrix is not orthogonal")
        if abs(np.linalg.det(r) - 1.0) > 1e-10:
            raise ValueError("matrix has determinant -1")
        r.setflags(write=False)
        object.__setattr__(self, "r", r)

    @property
    def n_qubits(self) -> int:
        return self.r.shape[0] // 2

    def __array__(self, dtype=None, copy=None):
        return self.r if dtype is None else self.r.astype(dtype)

    def __matmul__(self, other: "Rotation") -> "Rotation":
        return Rotation(self.r @ np.asarray(other))

    @classmethod
    def identity(cls, n_qubits: int) -> "Rotation":
        return cls(np.eye(2 * n_qubits))


@lru_cache(maxsize=16)
def _generator_matrices(n: int) -> tuple[np.ndarray, ...]:
    return tuple(jw_generator(i, n).to_matrix() for i in range(1, 2 * n + 1))


# -- exponential and logarithm through the real Schur form -------------------


def _schur_blocks(t: np.ndarray, tol: float = 1e-12) -> list[tuple[int, int]]:
    blocks = []
    i = 0
    d = t.shape[0]
    while i < d:
        if i + 1 < d and abs(t[i + 1, i]) > tol:
            blocks.append((i, 2))
            i += 2
        else:
            blocks.append((i, 1))
            i += 1
    return blocks


def expm_antisymmetric(a: np.ndarray) -> np.ndarray:
    """``exp(a)`` for real antisymmetric ``a``; the result is in SO(d)."""
    a = np.asarray(a, dtype=float)
    a = 0.5 * (a - a.T)
    t, z = sla.schur(a, output="real")
    e = np.zeros_like(t)
    for i, size in _schur_blocks(t):
        if size == 1:
            e[i, i] = 1.0
        else:
            ang = 0.5 * (t[i, i + 1] - t[i + 1, i])
            c, s = np.cos(ang), np.sin(ang)
            e[i : i + 2, i : i + 2] = [[c, s], [-s, c]]
    return z @ e @ z.T


def logm_orthogonal(r: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    """Principal logarithm of a special-orthogonal matrix.

    Rotation angles land in (-pi, pi).  Raises BranchAmbiguityError when an
    eigenvalue lies within ``tol`` of -1, where the principal branch is not
    unique.
    """
    r = np.asarray(r, dtype=float)
    if np.min(np.abs(np.linalg.eigvals(r) + 1.0)) < tol:
        raise BranchAmbiguityError("rotation has an eigenvalue at -1; logarithm branch is ambiguous")
    t, z = sla.schur(r, output="real")
    lg = np.zeros_like(t)
    for i, size in _schur_blocks(t):
        if size == 2:
            c = 0.5 * (t[i, i] + t[i + 1, i + 1])
            s = 0.5 * (t[i, i + 1] - t[i + 1, i])
            ang = np.arctan2(s, c)
            lg[i : i + 2, i : i + 2] = [[0.0, ang], [-ang, 0.0]]
    out = z @ lg @ z.T
    return 0.5 * (out - out.T)


def rotation_from_hamiltonian(h: QuadraticHamiltonian | np.ndarray) -> Rotation:
    if not isinstance(h, QuadraticHamiltonian):
        h = QuadraticHamiltonian(h)
    return Rotation(expm_antisymmetric(4.0 * h.h))


def hamiltonian_from_rotation(r: Rotation | np.ndarray) -> QuadraticHamiltonian:
    return QuadraticHamiltonian(logm_orthogonal(np.asarray(r)) / 4.0)


def _check_unitary(u: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    u = np.asarray(u, dtype=complex)
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        raise ValueError("unitary must be square")
    if not np.allclose(u.conj().T @ u, np.eye(u.shape[0]), atol=tol):
        raise ValueError("matrix is not unitary")
    return u


def _n_from_dim(d: int) -> int:
    n = d.bit_length() - 1
    if 2**n != d or n < 1:
        raise ValueError(f"dimension {d} is not a power of two")
    return n


def conjugation_rotation(u: np.ndarray) -> np.ndarray:
    """Brute-force ``R[j, i] = 2^-n Tr(c_j U c_i U^dagger)``.

    No orthogonality is enforced, so a non-Gaussian ``U`` shows up as a
    non-orthogonal result.
    """
    u = _check_unitary(u)
    n = _n_from_dim(u.shape[0])
    gens = np.array(_generator_matrices(n))
    moved = np.einsum("ab,ibc,dc->iad", u, gens, u.conj())
    # generators are Hermitian, so Tr(c_j^dagger X) = sum conj(c_j) * X
    r = np.einsum("jab,iab->ji", gens.conj(), moved) / 2**n
    return r.real


def _principal_log_unitary(u: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    t, z = sla.schur(u, output="complex")
    lam = np.diag(t)
    if np.min(np.abs(lam + 1.0)) < tol:
        raise BranchAmbiguityError("unitary has an eigenvalue at -1; logarithm branch is ambiguous")
    return z @ np.diag(np.log(lam)) @ z.conj().T


def hamiltonian_from_unitary(u: np.ndarray, tol: float = 1e-8) -> QuadraticHamiltonian:
    """Recover ``h`` from a Gaussian unitary.

    The quadratic coefficients are read off the principal logarithm,
    ``h[i, j] = 2^-n Tr((c_i c_j)^dagger log U) / 2``; the factor 1/2 undoes
    the double counting of the ``i != j`` sum in ``H``.  When the principal
    logarithm leaves the span of ``{1, c_i c_j}`` (many-body phases wrapped
    past pi) the coefficients are taken from the logarithm of the
    conjugation rotation instead.  Either way ``exp(4 h)`` reproduces the
    conjugation action of ``U``.
    """
    u = _check_unitary(u)
    n = _n_from_dim(u.shape[0])
    r_conj = conjugation_rotation(u)
    if not np.allclose(r_conj.T @ r_conj, np.eye(2 * n), atol=1e-8):
        raise NotAMatchgateError("unitary does not act on the generators by a rotation")
    gens = _generator_matrices(n)
    d = 2**n
    try:
        lg = _principal_log_unitary(u, tol)
    except BranchAmbiguityError:
        lg = None
    if lg is not None:
        h = np.zeros((2 * n, 2 * n))
        recon = np.trace(lg) / d * np.eye(d, dtype=complex)
        for i in range(2 * n):
            for j in range(i + 1, 2 * n):
                pair = gens[i] @ gens[j]
                coeff = np.trace(pair.conj().T @ lg) / d
                h[i, j] = coeff.real / 2.0
                h[j, i] = -h[i, j]
                recon += coeff * pair
        if np.allclose(recon, lg, atol=1e-8) and np.allclose(
            expm_antisymmetric(4.0 * h), r_conj, atol=1e-8
        ):
            return QuadraticHamiltonian(h)
    return hamiltonian_from_rotation(r_conj)


def unitary_from_hamiltonian(h: QuadraticHamiltonian | np.ndarray) -> np.ndarray:
    if not isinstance(h, QuadraticHamiltonian):
        h = QuadraticHamiltonian(h)
    ham = h.operator()
    w, v = np.linalg.eigh(0.5 * (ham + ham.conj().T))
    return (v * np.exp(-1j * w)) @ v.conj().T


def unitary_from_rotation(r: Rotation | np.ndarray) -> np.ndarray:
    """A Gaussian unitary with rotation ``r`` (defined up to global phase)."""
    return unitary_from_hamiltonian(hamiltonian_from_rotation(r))


# -- two-qubit gates ----------------------------------------------------------

_ODD = (1, 2)  # |01>, |10>
_EVEN = (0, 3)  # |00>, |11>


def gate_G(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Two-qubit gate acting as ``a`` on {|01>, |10>} and ``b`` on {|00>, |11>}.

    Blocks with ``det a != det b`` still produce a gate (a non-matchgate
    G-tilde); use :func:`is_matchgate` to tell them apart.
    """
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    for name, blk in (("A", a), ("B", b)):
        if blk.shape != (2, 2) or not np.allclose(blk.conj().T @ blk, np.eye(2), atol=1e-10):
            raise ValueError(f"block {name} is not a 2x2 unitary")
    g = np.zeros((4, 4), dtype=complex)
    g[np.ix_(_ODD, _ODD)] = a
    g[np.ix_(_EVEN, _EVEN)] = b
    return g


def matchgate_blocks(g: np.ndarray, tol: float = 1e-10) -> tuple[np.ndarray, np.ndarray]:
    """Split a parity-preserving 4x4 gate into its (odd, even) blocks."""
    g = np.asarray(g, dtype=complex)
    if g.shape != (4, 4):
        raise ValueError("gate must be 4x4")
    mask = np.zeros((4, 4), dtype=bool)
    mask[np.ix_(_ODD, _ODD)] = True
    mask[np.ix_(_EVEN, _EVEN)] = True
    if np.max(np.abs(g[~mask]), initial=0.0) > tol:
        raise NotAMatchgateError("gate mixes parity sectors")
    return g[np.ix_(_ODD, _ODD)], g[np.ix_(_EVEN, _EVEN)]


def is_matchgate(g: np.ndarray, tol: float = 1e-10) -> bool:
    try:
        a, b = matchgate_blocks(g, tol)
    except NotAMatchgateError:
        return False
    return abs(np.linalg.det(a) - np.linalg.det(b)) <= tol


def fsim(theta: float, phi: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array(
        [
            [1, 0, 0, 0],
            [0, c, -1j * s, 0],
            [0, -1j * s, c, 0],
            [0, 0, 0, np.exp(1j * phi)],
        ],
        dtype=complex,
    )


def xy_gate(theta: float) -> np.ndarray:
    return fsim(theta, 0.0)


def givens_gate(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return gate_G([[c, -s], [s, c]], np.eye(2))


def _embed(g: np.ndarray, q: int, n: int) -> np.ndarray:
    return np.kron(np.kron(np.eye(2 ** (q - 1)), g), np.eye(2 ** (n - q - 1)))


def gate_rotation(g: np.ndarray, q: int, n: int) -> np.ndarray:
    """SO(2n) rotation of a matchgate acting on qubits ``(q, q + 1)``.

    The gate commutes with every generator outside ``c_{2q-1} .. c_{2q+2}``
    (it preserves the parity of its two qubits), so only a 4x4 block is
    nontrivial.
    """
    if not is_matchgate(g):
        raise NotAMatchgateError("gate does not satisfy det A = det B")
    if not 1 <= q <= n - 1:
        raise ValueError(f"qubit pair ({q}, {q + 1}) outside register of {n}")
    local = conjugation_rotation(g)
    r = np.eye(2 * n)
    s = 2 * (q - 1)
    r[s : s + 4, s : s + 4] = local
    return r


@dataclass(frozen=True)
class MatchgateCircuit:
    """Nearest-neighbour two-qubit gates applied in list order.

    ``matchgate_only=False`` admits G-tilde gates (e.g. fSim with phi != 0);
    such circuits have a unitary but no rotation.
    """

    n_qubits: int
    gates: tuple[tuple[int, np.ndarray], ...] = ()
    matchgate_only: bool = True

    def __post_init__(self):
        if self.n_qubits < 1:
            raise ValueError("n_qubits must be positive")
        checked = []
        for q, g in self.gates:
            g = np.array(g, dtype=complex)
            if g.shape != (4, 4):
                raise ValueError("gates must be 4x4")
            if not 1 <= q <= self.n_qubits - 1:
                raise ValueError(f"qubit pair ({q}, {q + 1}) outside register of {self.n_qubits}")
            _check_unitary(g)
            if self.matchgate_only and not is_matchgate(g):
                raise NotAMatchgateError(f"gate on ({q}, {q + 1}) is not a matchgate")
            matchgate_blocks(g)
            g.setflags(write=False)
            checked.append((int(q), g))
        object.__setattr__(self, "gates", tuple(checked))

    def unitary(self) -> np.ndarray:
        u = np.eye(2**self.n_qubits, dtype=complex)
        for q, g in self.gates:
            u = _embed(g, q, self.n_qubits) @ u
        return u

    def then(self, other: "MatchgateCircuit") -> "MatchgateCircuit":
        """This circuit followed by ``other``."""
        if other.n_qubits != self.n_qubits:
            raise ValueError("register width mismatch")
        return MatchgateCircuit(
            self.n_qubits, self.gates + other.gates, self.matchgate_only and other.matchgate_only
        )


def circuit_to_rotation(c: MatchgateCircuit) -> Rotation:
    r = np.eye(2 * c.n_qubits)
    for q, g in c.gates:
        r = gate_rotation(g, q, c.n_qubits) @ r
    return Rotation(r)


# -- subgroup structure -------------------------------------------------------


def _xy_witnesses(d: int) -> list[tuple[int, ...]]:
    odd_even = tuple(range(0, d, 2)) + tuple(range(1, d, 2))
    # generators 1,4,5,8,... against 2,3,6,7,... (0-based: i % 4 in {0, 3})
    paired = tuple(i for i in range(d) if i % 4 in (0, 3)) + tuple(
        i for i in range(d) if i % 4 in (1, 2)
    )
    return [odd_even, paired]


def check_xy_structure(
    r: Rotation | np.ndarray, tol: float = 1e-9
) -> tuple[bool, tuple[int, ...] | None]:
    """Test for the reshuffled block form ``R ~ Rt (+) Rt'`` of XY circuits.

    Returns ``(True, perm)`` where ``perm`` lists the 1-based generator
    indices of the first block followed by the second, or ``(False, None)``.
    The blocks must satisfy ``Rt'[i, j] = (-1)**(i + j) Rt[i, j]``.
    """
    r = np.asarray(r, dtype=float)
    d = r.shape[0]
    m = d // 2
    signs = (-1.0) ** np.add.outer(np.arange(m), np.arange(m))
    for perm in _xy_witnesses(d):
        p = np.array(perm)
        s = r[np.ix_(p, p)]
        first, second = s[:m, :m], s[m:, m:]
        off = max(np.max(np.abs(s[:m, m:])), np.max(np.abs(s[m:, :m])))
        if off <= tol and np.allclose(second, signs * first, atol=tol):
            return True, tuple(int(i) + 1 for i in perm)
    return False, None


def check_givens_structure(r: Rotation | np.ndarray, tol: float = 1e-9) -> bool:
    """Test for the Kronecker form ``R = Rt (x) 1_2`` of Givens circuits."""
    r = np.asarray(r, dtype=float)
    small = r[::2, ::2]
    return bool(np.allclose(r, np.kron(small, np.eye(2)), atol=tol))


# -- random instances ---------------------------------------------------------


def haar_random_special_orthogonal(dim: int, seed=None) -> np.ndarray:
    """Haar-distributed element of SO(dim)."""
    rng = _as_rng(seed)
    z = rng.standard_normal((dim, dim))
    q, r = np.linalg.qr(z)
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def haar_random_rotation(n_qubits: int, seed=None) -> Rotation:
    return Rotation(haar_random_special_orthogonal(2 * n_qubits, seed))


def _haar_unitary_2(rng: np.random.Generator) -> np.ndarray:
    z = (rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))


def random_matchgate(seed=None) -> np.ndarray:
    rng = _as_rng(seed)
    a = _haar_unitary_2(rng)
    b = _haar_unitary_2(rng)
    b = b * np.sqrt(np.linalg.det(a) / np.linalg.det(b))
    return gate_G(a, b)


def _random_circuit(n, n_gates, rng, make) -> MatchgateCircuit:
    if n < 2:
        return MatchgateCircuit(n)
    gates = []
    for _ in range(n_gates):
        q = int(rng.integers(1, n))
        gates.append((q, make(rng)))
    return MatchgateCircuit(n, tuple(gates))


def random_matchgate_circuit(n: int, n_gates: int | None = None, seed=None) -> MatchgateCircuit:
    rng = _as_rng(seed)
    n_gates = 2 * n * n if n_gates is None else n_gates
    return _random_circuit(n, n_gates, rng, random_matchgate)


def random_xy_circuit(n: int, n_gates: int | None = None, seed=None) -> MatchgateCircuit:
    rng = _as_rng(seed)
    n_gates = 2 * n * n if n_gates is None else n_gates
    return _random_circuit(n, n_gates, rng, lambda g: xy_gate(g.uniform(0, 2 * np.pi)))


def random_givens_circuit(n: int, n_gates: int | None = None, seed=None) -> MatchgateCircuit:
    rng = _as_rng(seed)
    n_gates = 2 * n * n if n_gates is None else n_gates
    return _random_circuit(n, n_gates, rng, lambda g: givens_gate(g.uniform(0, 2 * np.pi)))


# -- circuit files ------------------------------------------------------------
#
#   # comment
#   QUBITS n
#   G q A11 A12 A21 A22 B11 B12 B21 B22     complex entries as re+imi
#   FSIM q theta phi
#   XY q theta
#   GIVENS q theta

_COMPLEX_RE = re.compile(r"^[+-]?[0-9.eE+-]*i?$")


def _parse_complex(tok: str) -> complex:
    if not _COMPLEX_RE.match(tok):
        raise ValueError(f"bad complex literal {tok!r}")
    try:
        return complex(tok.replace("i", "j"))
    except ValueError:
        raise ValueError(f"bad complex literal {tok!r}") from None


def _format_complex(z: complex) -> str:
    z = complex(z)
    sign = "-" if np.signbit(z.imag) else "+"
    return f"{z.real!r}{sign}{abs(z.imag)!r}i"


def parse_circuit(text: str, matchgate_only: bool = True) -> MatchgateCircuit:
    n = None
    gates = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        head = tok[0].upper()
        try:
            if head == "QUBITS":
                n = int(tok[1])
                continue
            q = int(tok[1])
            if head == "G":
                if len(tok) != 10:
                    raise ValueError("G needs a qubit and 8 complex entries")
                vals = [_parse_complex(t) for t in tok[2:]]
                g = gate_G(np.reshape(vals[:4], (2, 2)), np.reshape(vals[4:], (2, 2)))
            elif head == "FSIM":
                g = fsim(float(tok[2]), float(tok[3]))
            elif head == "XY":
                g = xy_gate(float(tok[2]))
            elif head == "GIVENS":
                g = givens_gate(float(tok[2]))
            else:
                raise ValueError(f"unknown directive {tok[0]!r}")
        except (IndexError, ValueError) as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
        gates.append((q, g))
    if n is None:
        raise ValueError("circuit file lacks a QUBITS line")
    return MatchgateCircuit(n, tuple(gates), matchgate_only)


def format_circuit(c: MatchgateCircuit) -> str:
    lines = [f"QUBITS {c.n_qubits}"]
    for q, g in c.gates:
        a, b = g[np.ix_(_ODD, _ODD)], g[np.ix_(_EVEN, _EVEN)]
        ents = " ".join(_format_complex(z) for z in list(a.ravel()) + list(b.ravel()))
        lines.append(f"G {q} {ents}")
    return "\n".join(lines) + "\n"


def load_circuit(path: str | Path, matchgate_only: bool = True) -> MatchgateCircuit:
    return parse_circuit(Path(path).read_text(), matchgate_only)
