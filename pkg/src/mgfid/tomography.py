"""Learning a matchgate circuit from single-generator experiments.

Every entry ``R[i, j] = chi_U({i}, {j})`` is estimated by averaging shots
that prepare an eigenstate of ``c_j`` and measure ``c_i``. The empirical
matrix is projected onto SO(2n), and the quadratic Hamiltonian and unitary
follow from its logarithm.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import IO

import numpy as np

from .clifford import monomial_to_pauli
from .matchgate import (
    QuadraticHamiltonian,
    Rotation,
    conjugation_rotation,
    logm_orthogonal,
    unitary_from_hamiltonian,
)
from .simulator import NoisyChannel, ShotSimulator
from .superop import entanglement_fidelity, matchgate_superop

__all__ = [
    "TomographyConfig",
    "TomographyResult",
    "estimate_rotation",
    "project_to_special_orthogonal",
    "reconstruct_hamiltonian",
    "canonical_phase",
    "phase_aligned_distance",
    "run_tomography",
    "format_matrix",
    "parse_matrix",
]


@dataclass(frozen=True)
class TomographyConfig:
    shots_per_entry: int
    seed: int | None = 0

    def __post_init__(self):
        if int(self.shots_per_entry) < 1:
            raise ValueError("shots_per_entry must be at least 1")


def estimate_rotation(ch: NoisyChannel, cfg: TomographyConfig) -> np.ndarray:
    """Empirical ``2n x 2n`` matrix of mean shot values, one shot stream per entry."""
    n = ch.n_qubits
    sim = ShotSimulator(ch)
    root = np.random.SeedSequence(cfg.seed)
    gens = [monomial_to_pauli((i,), n) for i in range(1, 2 * n + 1)]
    out = np.empty((2 * n, 2 * n))
    for i in range(2 * n):
        for j in range(2 * n):
            ss = np.random.SeedSequence(root.entropy, spawn_key=(i, j))
            batch = sim.run_pauli_shots(gens[i], gens[j], cfg.shots_per_entry, np.random.default_rng(ss))
            out[i, j] = float(np.mean(batch.B).real)
    return out


def project_to_special_orthogonal(raw: np.ndarray, rank_tol: float = 1e-12) -> Rotation:
    """Nearest SO(d) matrix in Frobenius norm.

    The polar factor ``U V^T`` is the nearest orthogonal matrix; when its
    determinant is negative the direction of the smallest singular value is
    flipped, which is the cheapest way back into SO(d).
    """
    raw = np.asarray(raw, dtype=float)
    u, s, vt = np.linalg.svd(raw)
    if s[-1] <= rank_tol * max(s[0], 1.0):
        raise ValueError("empirical matrix is rank deficient")
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        u[:, -1] *= -1
    return Rotation(u @ vt)


def canonical_phase(u: np.ndarray) -> np.ndarray:
    """Global phase fixed so the largest-magnitude entry is real positive."""
    u = np.asarray(u, dtype=complex)
    k = np.argmax(np.abs(u))
    z = u.flat[k]
    return u * (abs(z) / z)


def phase_aligned_distance(u: np.ndarray, v: np.ndarray) -> float:
    """``min_phi ||u - e^{i phi} v||`` in operator norm, for unitaries ``u, v``.

    With ``w`` the width of the shortest arc holding every eigenphase of
    ``v^dagger u``, the optimum sits at the arc midpoint and equals
    ``2 sin(w / 4)``.
    """
    phases = np.sort(np.angle(np.linalg.eigvals(np.asarray(v).conj().T @ np.asarray(u))))
    gaps = np.diff(np.concatenate([phases, phases[:1] + 2 * np.pi]))
    width = 2 * np.pi - gaps.max()
    return float(2 * np.sin(width / 4))


def reconstruct_hamiltonian(r: Rotation | np.ndarray) -> tuple[QuadraticHamiltonian, np.ndarray]:
    """``h = log(R) / 4`` and ``U = exp(-iH)`` in canonical phase."""
    h = QuadraticHamiltonian(logm_orthogonal(np.asarray(r, dtype=float)) / 4.0)
    return h, canonical_phase(unitary_from_hamiltonian(h))


@dataclass(frozen=True)
class TomographyResult:
    raw: np.ndarray
    rotation: Rotation
    hamiltonian: QuadraticHamiltonian
    unitary: np.ndarray
    shots_per_entry: int
    consistency: float
    raw_error: float | None = None
    rotation_error: float | None = None
    unitary_distance: float | None = None
    entanglement_fidelity: float | None = None

    @property
    def total_shots(self) -> int:
        return self.raw.size * self.shots_per_entry

    def summary(self) -> dict:
        return {
            "n_qubits": self.rotation.n_qubits,
            "shots_per_entry": self.shots_per_entry,
            "total_shots": self.total_shots,
            "consistency": self.consistency,
            "rotation_frobenius_error": self.rotation_error,
            "raw_frobenius_error": self.raw_error,
            "unitary_distance": self.unitary_distance,
            "entanglement_fidelity": self.entanglement_fidelity,
        }


def run_tomography(
    ch: NoisyChannel, cfg: TomographyConfig, reference: Rotation | np.ndarray | None = None
) -> TomographyResult:
    """Estimate, project and reconstruct; compare against ``reference`` if given.

    ``consistency`` is the largest deviation between the conjugation action
    of the reconstructed unitary and the projected rotation.
    """
    raw = estimate_rotation(ch, cfg)
    rot = project_to_special_orthogonal(raw)
    h, u = reconstruct_hamiltonian(rot)
    consistency = float(np.max(np.abs(conjugation_rotation(u) - np.asarray(rot))))
    raw_err = err = dist = fe = None
    if reference is not None:
        ref = np.asarray(reference, dtype=float)
        raw_err = float(np.linalg.norm(raw - ref))
        err = float(np.linalg.norm(np.asarray(rot) - ref))
        fe = entanglement_fidelity(matchgate_superop(ref), matchgate_superop(rot))
        dist = phase_aligned_distance(ch.ideal_unitary, u)
    return TomographyResult(raw, rot, h, u, cfg.shots_per_entry, consistency, raw_err, err, dist, fe)


def format_matrix(m: np.ndarray) -> str:
    buf = io.StringIO()
    np.savetxt(buf, np.asarray(m, dtype=float), fmt="%.17g")
    return buf.getvalue()


def parse_matrix(fh: IO[str] | str) -> np.ndarray:
    if isinstance(fh, str):
        fh = io.StringIO(fh)
    return np.atleast_2d(np.loadtxt(fh, dtype=float))
