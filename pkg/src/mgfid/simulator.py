"""Density-matrix simulation of the Pauli SPAM experiment.

A :class:`NoisyChannel` is the ideal unitary followed by a sequence of noise
stages.  One *shot* prepares a random product eigenstate of a Pauli string,
sends it through the channel and measures another Pauli string, returning
the +/-1 parity of the outcome over that string's support.

:class:`ShotSimulator` draws many shots for the same pair of strings at
once.  It evaluates the outcome probability of every one of the ``2**n``
eigenstates in the Heisenberg picture and samples from those exact
probabilities, which is statistically identical to repeating
:func:`shot` but far cheaper.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import IO, Iterable, Sequence

import numpy as np

from .clifford import PauliString, format_subset, monomial_to_pauli

__all__ = [
    "GlobalDepolarizing",
    "LocalKraus",
    "KrausNoise",
    "NoisyChannel",
    "ShotRecord",
    "ShotBatch",
    "ShotSimulator",
    "depolarizing",
    "amplitude_damping",
    "phase_damping",
    "composed",
    "parse_noise",
    "prepare_pauli_eigenstate",
    "apply_channel",
    "measure_pauli",
    "shot",
    "write_shot_log",
]

_LETTER = {
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}
_S2 = 1 / np.sqrt(2)
_EIGVEC = {
    ("X", 0): np.array([_S2, _S2], dtype=complex),
    ("X", 1): np.array([_S2, -_S2], dtype=complex),
    ("Y", 0): np.array([_S2, 1j * _S2], dtype=complex),
    ("Y", 1): np.array([_S2, -1j * _S2], dtype=complex),
    ("Z", 0): np.array([1, 0], dtype=complex),
    ("Z", 1): np.array([0, 1], dtype=complex),
}


def _check_kraus(ops: Sequence[np.ndarray], tol: float = 1e-10) -> None:
    d = ops[0].shape[0]
    total = sum(k.conj().T @ k for k in ops)
    if not np.allclose(total, np.eye(d), atol=tol):
        raise ValueError("Kraus operators are not trace preserving")


def _check_param(name: str, value: float) -> float:
    value = float(value)
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {value}")
    return value


def _apply_local(ops: np.ndarray, kraus: Sequence[np.ndarray], q: int, n: int) -> np.ndarray:
    """Apply a single-qubit channel on qubit ``q`` to a stack of operators."""
    b = ops.shape[0]
    t = ops.reshape((b,) + (2,) * (2 * n))
    row, col = 1 + q, 1 + n + q
    out = np.zeros_like(t)
    for k in kraus:
        x = np.moveaxis(np.tensordot(k, t, axes=([1], [row])), 0, row)
        x = np.moveaxis(np.tensordot(x, k.conj(), axes=([col], [1])), -1, col)
        out += x
    return out.reshape(ops.shape)


@dataclass(frozen=True)
class GlobalDepolarizing:
    """``rho -> (1 - p) rho + p Tr(rho) 1 / 2^n``."""

    p: float

    def __post_init__(self):
        object.__setattr__(self, "p", _check_param("p", self.p))

    def apply(self, ops: np.ndarray) -> np.ndarray:
        d = ops.shape[-1]
        tr = np.trace(ops, axis1=-2, axis2=-1)
        return (1 - self.p) * ops + self.p * tr[..., None, None] * np.eye(d) / d

    # self-adjoint under the Hilbert-Schmidt product
    apply_adjoint = apply

    def kraus_ops(self, n: int) -> list[np.ndarray]:
        from itertools import product

        mats = [np.eye(2, dtype=complex)] + [_LETTER[c] for c in "XYZ"]
        out = []
        for idx in product(range(4), repeat=n):
            m = np.array([[1.0 + 0j]])
            for i in idx:
                m = np.kron(m, mats[i])
            w = self.p / 4**n + (1 - self.p if not any(idx) else 0.0)
            out.append(np.sqrt(w) * m)
        return out


@dataclass(frozen=True)
class LocalKraus:
    """The same single-qubit channel applied independently to every qubit."""

    ops: tuple[np.ndarray, ...]
    name: str = "local"

    def __post_init__(self):
        ops = tuple(np.array(k, dtype=complex) for k in self.ops)
        if any(k.shape != (2, 2) for k in ops):
            raise ValueError("local Kraus operators must be 2x2")
        _check_kraus(ops)
        object.__setattr__(self, "ops", ops)

    def apply(self, ops: np.ndarray) -> np.ndarray:
        n = ops.shape[-1].bit_length() - 1
        flat = ops.reshape((-1,) + ops.shape[-2:])
        for q in range(n):
            flat = _apply_local(flat, self.ops, q, n)
        return flat.reshape(ops.shape)

    def apply_adjoint(self, ops: np.ndarray) -> np.ndarray:
        n = ops.shape[-1].bit_length() - 1
        adj = tuple(k.conj().T for k in self.ops)
        flat = ops.reshape((-1,) + ops.shape[-2:])
        for q in range(n):
            flat = _apply_local(flat, adj, q, n)
        return flat.reshape(ops.shape)

    def kraus_ops(self, n: int) -> list[np.ndarray]:
        out = [np.array([[1.0 + 0j]])]
        for _ in range(n):
            out = [np.kron(a, k) for a in out for k in self.ops]
        return out


@dataclass(frozen=True)
class KrausNoise:
    """Arbitrary register-wide Kraus operators."""

    ops: tuple[np.ndarray, ...]

    def __post_init__(self):
        ops = tuple(np.array(k, dtype=complex) for k in self.ops)
        if not ops:
            raise ValueError("need at least one Kraus operator")
        _check_kraus(ops)
        object.__setattr__(self, "ops", ops)

    def apply(self, ops: np.ndarray) -> np.ndarray:
        return sum(k @ ops @ k.conj().T for k in self.ops)

    def apply_adjoint(self, ops: np.ndarray) -> np.ndarray:
        return sum(k.conj().T @ ops @ k for k in self.ops)

    def kraus_ops(self, n: int) -> list[np.ndarray]:
        return list(self.ops)


NoiseStage = GlobalDepolarizing | LocalKraus | KrausNoise


def depolarizing(p: float) -> GlobalDepolarizing:
    return GlobalDepolarizing(p)


def amplitude_damping(gamma: float) -> LocalKraus:
    g = _check_param("gamma", gamma)
    k0 = np.array([[1, 0], [0, np.sqrt(1 - g)]])
    k1 = np.array([[0, np.sqrt(g)], [0, 0]])
    return LocalKraus((k0, k1), "amplitude_damping")


def phase_damping(gamma: float) -> LocalKraus:
    g = _check_param("gamma", gamma)
    k0 = np.array([[1, 0], [0, np.sqrt(1 - g)]])
    k1 = np.array([[0, 0], [0, np.sqrt(g)]])
    return LocalKraus((k0, k1), "phase_damping")


def composed(stages: Iterable[NoiseStage]) -> tuple[NoiseStage, ...]:
    """Flatten noise stages, applied in the given order."""
    out = []
    for s in stages:
        if isinstance(s, tuple):
            out.extend(composed(s))
        else:
            out.append(s)
    return tuple(out)


_NOISE_KINDS = {
    "depolarizing": lambda x: (depolarizing(x),),
    "depol": lambda x: (depolarizing(x),),
    "amplitude_damping": lambda x: (amplitude_damping(x),),
    "amp": lambda x: (amplitude_damping(x),),
    "phase_damping": lambda x: (phase_damping(x),),
    "phase": lambda x: (phase_damping(x),),
    "amp_phase": lambda x: (amplitude_damping(x), phase_damping(x)),
}


def parse_noise(spec: str) -> tuple[NoiseStage, ...]:
    """``"depolarizing:0.1"`` -> stages; ``"none"`` -> no noise."""
    spec = spec.strip()
    if spec in ("none", ""):
        return ()
    kind, _, val = spec.partition(":")
    if kind not in _NOISE_KINDS:
        raise ValueError(f"unknown noise kind {kind!r}; choose from {sorted(_NOISE_KINDS)}")
    try:
        x = float(val)
    except ValueError:
        raise ValueError(f"noise parameter missing or malformed in {spec!r}") from None
    return _NOISE_KINDS[kind](x)


@dataclass(frozen=True)
class NoisyChannel:
    """Ideal unitary followed by noise stages (applied in order)."""

    n_qubits: int
    ideal_unitary: np.ndarray
    stages: tuple[NoiseStage, ...] = ()

    def __post_init__(self):
        u = np.array(self.ideal_unitary, dtype=complex)
        d = 2**self.n_qubits
        if u.shape != (d, d):
            raise ValueError(f"unitary must be {d}x{d}")
        if not np.allclose(u.conj().T @ u, np.eye(d), atol=1e-10):
            raise ValueError("ideal_unitary is not unitary")
        u.setflags(write=False)
        object.__setattr__(self, "ideal_unitary", u)
        object.__setattr__(self, "stages", composed(self.stages))

    @classmethod
    def ideal(cls, u: np.ndarray) -> "NoisyChannel":
        u = np.asarray(u)
        return cls(u.shape[0].bit_length() - 1, u)

    def with_noise(self, *stages: NoiseStage) -> "NoisyChannel":
        return NoisyChannel(self.n_qubits, self.ideal_unitary, self.stages + composed(stages))

    @property
    def kraus_ops(self) -> list[np.ndarray]:
        """Kraus operators of the noise alone (the part after the unitary)."""
        ops = [np.eye(2**self.n_qubits, dtype=complex)]
        for s in self.stages:
            ops = [k @ a for k in s.kraus_ops(self.n_qubits) for a in ops]
        return ops

    def apply(self, ops: np.ndarray) -> np.ndarray:
        """Apply the channel to one operator or a stack ``(..., d, d)``."""
        u = self.ideal_unitary
        out = u @ np.asarray(ops, dtype=complex) @ u.conj().T
        for s in self.stages:
            out = s.apply(out)
        return out

    def apply_adjoint(self, ops: np.ndarray) -> np.ndarray:
        out = np.asarray(ops, dtype=complex)
        for s in reversed(self.stages):
            out = s.apply_adjoint(out)
        u = self.ideal_unitary
        return u.conj().T @ out @ u


# -- single shots -------------------------------------------------------------


@dataclass(frozen=True)
class ShotRecord:
    I: tuple[int, ...]
    J: tuple[int, ...]
    lam: int
    A: int
    phi: complex
    B: complex

    def __post_init__(self):
        if self.B != self.A * self.lam * self.phi:
            raise ValueError("B must equal A * lambda * phi")


def _letters_or_z(p: PauliString) -> str:
    return p.letters.replace("I", "Z")


def prepare_pauli_eigenstate(p: PauliString, rng: np.random.Generator) -> tuple[np.ndarray, int]:
    """Uniformly random joint eigenstate of ``p`` (phase ignored).

    Each qubit gets a random +/-1 eigenstate of its letter (Z eigenstates
    where the letter is the identity); the returned eigenvalue is the
    product of signs over the support of ``p``.
    """
    bits = rng.integers(0, 2, size=p.n_qubits)
    return _product_density(p, bits), _eigenvalue(p, bits)


def _eigenvalue(p: PauliString, bits: np.ndarray) -> int:
    supp = p.x | p.z
    flips = sum(int(b) for q, b in enumerate(bits) if (supp >> q) & 1)
    return -1 if flips % 2 else 1


def _product_density(p: PauliString, bits: np.ndarray) -> np.ndarray:
    rho = np.array([[1.0 + 0j]])
    for ch, b in zip(_letters_or_z(p), bits):
        sign = -1.0 if b else 1.0
        rho = np.kron(rho, 0.5 * (np.eye(2) + sign * _LETTER[ch]))
    return rho


def _check_density(rho: np.ndarray, tol: float = 1e-10) -> None:
    if abs(np.trace(rho) - 1.0) > tol:
        raise ValueError(f"density matrix has trace {np.trace(rho).real:.3g}")
    if not np.allclose(rho, rho.conj().T, atol=tol):
        raise ValueError("density matrix is not Hermitian")
    if np.min(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))) < -tol:
        raise ValueError("density matrix is not positive semidefinite")


def apply_channel(rho: np.ndarray, ch: NoisyChannel) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    _check_density(rho)
    out = ch.apply(rho)
    _check_density(out)
    return out


def _plus_probability(expectation: np.ndarray | float) -> np.ndarray | float:
    p = 0.5 * (1.0 + np.real(expectation))
    if np.any(p < -1e-9) or np.any(p > 1 + 1e-9):
        raise ValueError("measurement probability outside [0, 1]")
    return np.clip(p, 0.0, 1.0)


def measure_pauli(rho: np.ndarray, p: PauliString, rng: np.random.Generator) -> int:
    """Sample the +/-1 eigenvalue of the phase-stripped string ``p``.

    Equivalent to measuring every supported qubit in its letter basis and
    taking the parity of the outcome bits over the support.
    """
    plus = _plus_probability(np.trace(p.stripped().to_matrix() @ rho))
    return 1 if rng.random() < plus else -1


def _pair_phase(meas: PauliString, prep: PauliString) -> complex:
    return np.conj(meas.phase_value) * prep.phase_value


def shot(ch: NoisyChannel, I: Sequence[int], J: Sequence[int], rng: np.random.Generator) -> ShotRecord:
    """One iteration: prepare an eigenstate of ``P_J``, run ``ch``, measure ``P_I``."""
    n = ch.n_qubits
    c_i = monomial_to_pauli(tuple(I), n)
    c_j = monomial_to_pauli(tuple(J), n)
    phi = _pair_phase(c_i, c_j)
    rho, lam = prepare_pauli_eigenstate(c_j, rng)
    out = apply_channel(rho, ch)
    a = measure_pauli(out, c_i, rng)
    return ShotRecord(tuple(I), tuple(J), lam, a, phi, a * lam * phi)


# -- batched shots ------------------------------------------------------------


@dataclass(frozen=True)
class ShotBatch:
    """``m`` shots for one (measured, prepared) pair of Pauli strings."""

    lam: np.ndarray
    A: np.ndarray
    phi: complex

    @property
    def B(self) -> np.ndarray:
        b = self.A * self.lam
        if np.imag(self.phi) == 0:
            return b * float(np.real(self.phi))
        return b * self.phi

    def __len__(self) -> int:
        return len(self.A)


class ShotSimulator:
    """Exact-probability shot sampler for a fixed channel.

    Outcome probabilities for each (measured string, prepared string) pair
    are cached, so repeated draws cost one random number per shot.
    """

    def __init__(self, ch: NoisyChannel):
        self.channel = ch
        self.n = ch.n_qubits
        self._heisenberg: dict[tuple[int, int], np.ndarray] = {}
        self._states: dict[str, np.ndarray] = {}
        self._tables: dict[tuple[int, int, int, int], np.ndarray] = {}

    def _observable(self, p: PauliString) -> np.ndarray:
        key = (p.x, p.z)
        if key not in self._heisenberg:
            self._heisenberg[key] = self.channel.apply_adjoint(p.stripped().to_matrix())
        return self._heisenberg[key]

    def _product_states(self, p: PauliString) -> np.ndarray:
        letters = _letters_or_z(p)
        if letters not in self._states:
            n = self.n
            vecs = np.empty((2**n, 2**n), dtype=complex)
            for s in range(2**n):
                v = np.array([1.0 + 0j])
                for q, ch in enumerate(letters):
                    v = np.kron(v, _EIGVEC[ch, (s >> q) & 1])
                vecs[s] = v
            self._states[letters] = vecs
        return self._states[letters]

    def plus_probabilities(self, meas: PauliString, prep: PauliString) -> np.ndarray:
        """Pr(A = +1) for each eigenstate pattern of ``prep`` (bit q = qubit q)."""
        key = (meas.x, meas.z, prep.x, prep.z)
        if key not in self._tables:
            obs = self._observable(meas)
            psi = self._product_states(prep)
            ev = np.einsum("sa,ab,sb->s", psi.conj(), obs, psi)
            self._tables[key] = _plus_probability(ev)
        return self._tables[key]

    def _eigenvalues(self, prep: PauliString) -> np.ndarray:
        supp = prep.x | prep.z
        pats = np.arange(2**self.n)
        par = np.zeros(2**self.n, dtype=np.int64)
        for q in range(self.n):
            if (supp >> q) & 1:
                par ^= (pats >> q) & 1
        return 1 - 2 * par

    def mean_B(self, meas: PauliString, prep: PauliString) -> complex:
        """Exact expectation of B over eigenstates and outcomes."""
        plus = self.plus_probabilities(meas, prep)
        lam = self._eigenvalues(prep)
        return _pair_phase(meas, prep) * float(np.mean(lam * (2 * plus - 1)))

    def run_pauli_shots(
        self, meas: PauliString, prep: PauliString, m: int, rng: np.random.Generator
    ) -> ShotBatch:
        """``m`` shots measuring ``meas`` after preparing eigenstates of ``prep``.

        Both strings carry their phases; ``phi = conj(phase(meas)) * phase(prep)``.
        """
        plus = self.plus_probabilities(meas, prep)
        bits = rng.integers(0, 2, size=(m, self.n))
        pattern = bits @ (1 << np.arange(self.n))
        u = rng.random(m)
        a = np.where(u < plus[pattern], 1, -1).astype(np.int8)
        lam = self._eigenvalues(prep)[pattern].astype(np.int8)
        return ShotBatch(lam, a, _pair_phase(meas, prep))

    def run_shots(
        self, I: Sequence[int], J: Sequence[int], m: int, rng: np.random.Generator
    ) -> ShotBatch:
        c_i = monomial_to_pauli(tuple(I), self.n)
        c_j = monomial_to_pauli(tuple(J), self.n)
        return self.run_pauli_shots(c_i, c_j, m, rng)


def _phase_text(z: complex) -> tuple[str, str]:
    return repr(float(np.real(z))), repr(float(np.imag(z)))


def _b_text(b: complex) -> str:
    b = complex(b)
    if b.imag == 0:
        return "+1" if b.real > 0 else "-1"
    return "+i" if b.imag > 0 else "-i"


def write_shot_log(fh: IO[str], rows: Iterable[tuple[int, Sequence[int], Sequence[int], ShotBatch]], n: int) -> None:
    """Stream shots as CSV ``mu,nu,I,J,lambda,A,phi_re,phi_im,B``."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["mu", "nu", "I", "J", "lambda", "A", "phi_re", "phi_im", "B"])
    for mu, I, J, batch in rows:
        re_, im_ = _phase_text(batch.phi)
        si, sj = format_subset(I, n), format_subset(J, n)
        for nu, (lam, a, b) in enumerate(zip(batch.lam, batch.A, batch.B)):
            w.writerow([mu, nu, si, sj, int(lam), int(a), re_, im_, _b_text(b)])
