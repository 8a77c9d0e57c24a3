"""Sampling-based fidelity estimation for matchgate channels.

The ideal superoperator fixes a distribution ``Pr(I, J) = |chi_U(I, J)|^2 / 4^n``
over its nonzero entries. Each sampled pair is turned into a few
prepare-and-measure shots; the per-sample averages are reweighted by
``1 / chi_U(I, J)`` so that their mean is an unbiased estimate of the
entanglement fidelity.
"""

from __future__ import annotations

import json
import weakref
from dataclasses import dataclass, field
from math import ceil, comb, log
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .clifford import PauliString, basis_subsets, format_subset, monomial_to_pauli
from .simulator import NoisyChannel, ShotBatch, ShotSimulator
from .superop import COUNT_THRESHOLD, SparseSuperOp, channel_fidelity

__all__ = [
    "SCHEMA_VERSION",
    "ShotBudgetError",
    "EstimationPlan",
    "plan_runtime",
    "expected_total_shots",
    "AliasTable",
    "pair_probabilities",
    "sample_index_pair",
    "SampleRecord",
    "EstimationResult",
    "estimate_fidelity",
    "CliffordCircuit",
    "parse_clifford",
    "format_clifford",
    "load_clifford",
    "conjugate_pauli_by_clifford",
    "invert_clifford",
    "clifford_unitary",
    "random_clifford_circuit",
    "clifford_sandwich_estimate",
]

SCHEMA_VERSION = 1
DEFAULT_M_CAP = 10**6


class ShotBudgetError(RuntimeError):
    """A sample needs more repetitions than the configured cap allows."""


# -- planning -----------------------------------------------------------------


@dataclass(frozen=True)
class EstimationPlan:
    """Sample count ``l`` and the per-sample repetition rule.

    ``bound="box"`` uses ``m = ceil(2 ln(2/delta) / (chi^2 l eps^2))``;
    ``bound="appendix"`` uses the looser ``4 ln(4/delta)`` numerator.
    """

    epsilon: float
    delta: float
    l: int
    mode: str = "general"
    alpha: float | None = None
    bound: str = "box"
    m_cap: int = DEFAULT_M_CAP
    shot_cap: int | None = None

    def __post_init__(self):
        if not 0 < self.epsilon < 1 or not 0 < self.delta < 1:
            raise ValueError("epsilon and delta must lie in (0, 1)")
        if self.mode not in ("general", "well_conditioned"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.bound not in ("box", "appendix"):
            raise ValueError(f"unknown bound {self.bound!r}")
        if self.l < 1 or self.m_cap < 1:
            raise ValueError("l and m_cap must be positive")

    @property
    def numerator(self) -> float:
        if self.bound == "box":
            return 2 * log(2 / self.delta)
        return 4 * log(4 / self.delta)

    def uncapped_repetitions(self, chi: complex) -> int:
        mag2 = abs(chi) ** 2
        if mag2 == 0:
            raise ValueError("zero-weight sample")
        return max(ceil(self.numerator / (mag2 * self.l * self.epsilon**2)), 1)

    def repetitions(self, chi: complex) -> int:
        """``m_mu`` for a sample with ideal entry ``chi``."""
        m = self.uncapped_repetitions(chi)
        if m > self.m_cap:
            raise ShotBudgetError(
                f"sample with |chi| = {abs(chi):.3g} needs {m} shots (cap {self.m_cap}); "
                "consider the well-conditioned mode or a larger cap"
            )
        return m

    def general_bound(self, n_nonzero: int, n_qubits: int) -> float:
        """``1 + 1/(eps^2 delta) + (#nonzero / 4^n) c / eps^2`` with ``c`` the numerator."""
        eps2 = self.epsilon**2
        return 1 + 1 / (eps2 * self.delta) + n_nonzero / 4**n_qubits * self.numerator / eps2

    def well_conditioned_bound(self) -> float | None:
        """``4 ln(2/delta) / (alpha^2 eps^2)`` when a conditioning parameter is set."""
        if self.alpha is None:
            return None
        return 4 * log(2 / self.delta) / (self.alpha**2 * self.epsilon**2)


def plan_runtime(
    epsilon: float,
    delta: float,
    sup: SparseSuperOp | None = None,
    alpha: float | None = None,
    bound: str = "box",
    m_cap: int = DEFAULT_M_CAP,
    shot_cap: int | None = None,
) -> EstimationPlan:
    if not 0 < epsilon < 1 or not 0 < delta < 1:
        raise ValueError("epsilon and delta must lie in (0, 1)")
    if alpha is None:
        l = ceil(1 / (epsilon**2 * delta))
        return EstimationPlan(epsilon, delta, l, "general", None, bound, m_cap, shot_cap)
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    if sup is not None:
        mags = np.abs(sup.values)
        mags = mags[mags > COUNT_THRESHOLD]
        if mags.size and mags.min() < alpha - 1e-12:
            raise ValueError(f"alpha = {alpha} exceeds smallest nonzero entry {mags.min():.6g}")
    l = ceil(2 * log(2 / delta) / (alpha**2 * epsilon**2))
    return EstimationPlan(epsilon, delta, l, "well_conditioned", alpha, bound, m_cap, shot_cap)


def expected_total_shots(sup: SparseSuperOp, plan: EstimationPlan) -> float:
    """Exact mean of ``sum_mu m_mu`` under the sampling distribution."""
    probs = pair_probabilities(sup)
    reps = np.array([plan.uncapped_repetitions(v) for v in sup.values])
    return float(plan.l * np.sum(probs * reps))


# -- sampling -----------------------------------------------------------------


class AliasTable:
    """Vose alias table for O(1) draws from a fixed discrete distribution."""

    def __init__(self, probabilities: Sequence[float]):
        p = np.asarray(probabilities, dtype=float)
        if p.ndim != 1 or p.size == 0 or np.any(p < 0):
            raise ValueError("probabilities must be a non-empty non-negative vector")
        p = p / p.sum()
        size = p.size
        scaled = p * size
        self.prob = np.ones(size)
        self.alias = np.arange(size)
        small = [i for i in range(size) if scaled[i] < 1.0]
        large = [i for i in range(size) if scaled[i] >= 1.0]
        while small and large:
            s, g = small.pop(), large.pop()
            self.prob[s] = scaled[s]
            self.alias[s] = g
            scaled[g] = scaled[g] + scaled[s] - 1.0
            (small if scaled[g] < 1.0 else large).append(g)
        # leftovers are 1 up to rounding
        for i in small + large:
            self.prob[i] = 1.0

    def __len__(self) -> int:
        return self.prob.size

    def sample(self, rng: np.random.Generator, size: int | None = None):
        count = 1 if size is None else size
        cols = rng.integers(0, len(self), size=count)
        coin = rng.random(count)
        out = np.where(coin < self.prob[cols], cols, self.alias[cols])
        return int(out[0]) if size is None else out


def pair_probabilities(sup: SparseSuperOp, tol: float = 1e-8) -> np.ndarray:
    """``|chi|^2 / 4^n`` for each stored entry; raises if they do not sum to 1."""
    probs = np.abs(sup.values) ** 2 / sup.dim
    total = probs.sum()
    if abs(total - 1.0) > tol:
        raise ValueError(f"sampling weights sum to {total:.12g}; the superoperator is not unitary")
    return probs


_TABLES: "weakref.WeakKeyDictionary[SparseSuperOp, AliasTable]" = weakref.WeakKeyDictionary()


def _alias_for(sup: SparseSuperOp) -> AliasTable:
    table = _TABLES.get(sup)
    if table is None:
        table = AliasTable(pair_probabilities(sup))
        _TABLES[sup] = table
    return table


def _draw_pairs(sup: SparseSuperOp, rng: np.random.Generator, size: int) -> np.ndarray:
    return _alias_for(sup).sample(rng, size)


def sample_index_pair(sup: SparseSuperOp, rng: np.random.Generator) -> tuple[tuple[int, ...], tuple[int, ...]]:
    k = _alias_for(sup).sample(rng)
    subs = basis_subsets(sup.n_qubits)
    return subs[sup.rows[k]], subs[sup.cols[k]]


# -- estimation ---------------------------------------------------------------


@dataclass(frozen=True)
class SampleRecord:
    I: tuple[int, ...]
    J: tuple[int, ...]
    chi: complex
    m: int
    x_tilde: complex


@dataclass(frozen=True)
class EstimationResult:
    plan: EstimationPlan
    n_qubits: int
    Y_tilde: float
    Y_imag: float
    total_shots: int
    samples: tuple[SampleRecord, ...] = field(repr=False)
    lambda_prime: tuple[float, ...] | None = None

    @property
    def interval(self) -> tuple[float, float]:
        e = 2 * self.plan.epsilon
        return self.Y_tilde - e, self.Y_tilde + e

    @property
    def F(self) -> float:
        return channel_fidelity(self.Y_tilde, self.n_qubits, warn=False)

    def contains(self, value: float) -> bool:
        lo, hi = self.interval
        return lo <= value <= hi

    def to_json(self, include_samples: bool = True) -> dict:
        p = self.plan
        out = {
            "schema_version": SCHEMA_VERSION,
            "n_qubits": self.n_qubits,
            "epsilon": p.epsilon,
            "delta": p.delta,
            "mode": p.mode,
            "alpha": p.alpha,
            "bound": p.bound,
            "l": p.l,
            "total_shots": self.total_shots,
            "Y_tilde": self.Y_tilde,
            "Y_imag": self.Y_imag,
            "F_e_interval": list(self.interval),
            "F": self.F,
            "lambda_prime": None if self.lambda_prime is None else list(self.lambda_prime),
        }
        if include_samples:
            n = self.n_qubits
            out["per_sample"] = [
                {
                    "I": format_subset(s.I, n),
                    "J": format_subset(s.J, n),
                    "chi": [s.chi.real, s.chi.imag],
                    "m": s.m,
                    "X_tilde": [s.x_tilde.real, s.x_tilde.imag],
                }
                for s in self.samples
            ]
        return out

    def dumps(self, include_samples: bool = True) -> str:
        return json.dumps(self.to_json(include_samples), indent=2, sort_keys=True)


BatchHook = Callable[[int, tuple, tuple, ShotBatch], None]


def _seed_sequence(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    if isinstance(seed, np.random.Generator):
        return np.random.SeedSequence(int(seed.integers(2**63)))
    return np.random.SeedSequence(seed)


def _substream(root: np.random.SeedSequence, *key: int) -> np.random.Generator:
    ss = np.random.SeedSequence(root.entropy, spawn_key=tuple(root.spawn_key) + tuple(key))
    return np.random.default_rng(ss)


def _run(
    sup: SparseSuperOp,
    sim: ShotSimulator,
    plan: EstimationPlan,
    seed,
    strings: Callable[[tuple, tuple], tuple[PauliString, PauliString]],
    on_batch: BatchHook | None,
) -> EstimationResult:
    n = sup.n_qubits
    if sim.n != n:
        raise ValueError("channel and superoperator act on different registers")
    root = _seed_sequence(seed)
    picks = _draw_pairs(sup, _substream(root, 0), plan.l)
    subs = basis_subsets(n)

    # plan the whole budget before spending any shots
    chis = sup.values[picks]
    reps = [plan.repetitions(c) for c in chis]
    total = int(sum(reps))
    if plan.shot_cap is not None and total > plan.shot_cap:
        raise ShotBudgetError(f"run needs {total} shots, cap is {plan.shot_cap}")

    records = []
    acc = 0j
    for mu, (k, chi, m) in enumerate(zip(picks, chis, reps)):
        I, J = subs[sup.rows[k]], subs[sup.cols[k]]
        meas, prep = strings(I, J)
        batch = sim.run_pauli_shots(meas, prep, m, _substream(root, 1, mu))
        if on_batch is not None:
            on_batch(mu, I, J, batch)
        chi = complex(chi)
        x = complex(np.sum(batch.B)) / (chi * m)
        acc += x
        records.append(SampleRecord(I, J, chi, m, x))
    y = acc / plan.l

    lam = None
    if sup.block_structured:
        sums = np.zeros(2 * n + 1)
        for r in records:
            sums[len(r.I)] += r.x_tilde.real
        lam = tuple(float(4**n * sums[k] / (comb(2 * n, k) * plan.l)) for k in range(2 * n + 1))
    return EstimationResult(plan, n, float(y.real), float(y.imag), total, tuple(records), lam)


def estimate_fidelity(
    sup: SparseSuperOp,
    ch: NoisyChannel,
    plan: EstimationPlan,
    seed=None,
    on_batch: BatchHook | None = None,
    simulator: ShotSimulator | None = None,
) -> EstimationResult:
    """Run the full sampling estimator of ``F_e(E, U)``.

    ``seed`` feeds a seed sequence; the pair draws and each sample's shots
    use separate substreams so results do not depend on evaluation order.
    """
    sim = simulator or ShotSimulator(ch)
    n = sup.n_qubits

    def strings(I, J):
        return monomial_to_pauli(I, n), monomial_to_pauli(J, n)

    return _run(sup, sim, plan, seed, strings, on_batch)


# -- Clifford circuits --------------------------------------------------------

_CLIFFORD_GATES = {"H": 1, "S": 1, "X": 1, "CNOT": 2}


@dataclass(frozen=True)
class CliffordCircuit:
    """Gate list over {H, S, X, CNOT}; qubits are 1-based, first gate acts first."""

    n_qubits: int
    gates: tuple[tuple[str, tuple[int, ...]], ...] = ()

    def __post_init__(self):
        if self.n_qubits < 1:
            raise ValueError("n_qubits must be positive")
        gates = []
        for name, qubits in self.gates:
            name = name.upper()
            qubits = tuple(int(q) for q in qubits)
            if name not in _CLIFFORD_GATES:
                raise ValueError(f"unsupported Clifford gate {name!r}")
            if len(qubits) != _CLIFFORD_GATES[name]:
                raise ValueError(f"{name} takes {_CLIFFORD_GATES[name]} qubit(s)")
            if any(not 1 <= q <= self.n_qubits for q in qubits) or len(set(qubits)) != len(qubits):
                raise ValueError(f"bad qubits {qubits} for {name} on {self.n_qubits} qubits")
            gates.append((name, qubits))
        object.__setattr__(self, "gates", tuple(gates))

    def __len__(self) -> int:
        return len(self.gates)


def parse_clifford(text: str, n_qubits: int | None = None) -> CliffordCircuit:
    """Parse lines ``H q``, ``S q``, ``X q``, ``CNOT c t``; optional ``QUBITS n`` header."""
    gates = []
    declared = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        name = parts[0].upper()
        try:
            args = [int(t) for t in parts[1:]]
        except ValueError:
            raise ValueError(f"line {lineno}: non-integer qubit index") from None
        if name == "QUBITS":
            declared = args[0]
            continue
        if name not in _CLIFFORD_GATES:
            raise ValueError(f"line {lineno}: unsupported Clifford gate {parts[0]!r}")
        gates.append((name, tuple(args)))
    if n_qubits is None:
        n_qubits = declared or max((q for _, qs in gates for q in qs), default=1)
    elif declared is not None and declared != n_qubits:
        raise ValueError(f"file declares {declared} qubits, expected {n_qubits}")
    return CliffordCircuit(n_qubits, tuple(gates))


def format_clifford(c: CliffordCircuit) -> str:
    lines = [f"QUBITS {c.n_qubits}"]
    lines += [" ".join([name] + [str(q) for q in qs]) for name, qs in c.gates]
    return "\n".join(lines) + "\n"


def load_clifford(path: str | Path, n_qubits: int | None = None) -> CliffordCircuit:
    return parse_clifford(Path(path).read_text(), n_qubits)


def _conjugate_gate(name: str, qubits: tuple[int, ...], x: int, z: int) -> tuple[int, int, int]:
    """Update ``(x, z)`` for ``g P g^dagger``; returns the sign bit picked up."""
    if name == "CNOT":
        c, t = (q - 1 for q in qubits)
        xc, zc = (x >> c) & 1, (z >> c) & 1
        xt, zt = (x >> t) & 1, (z >> t) & 1
        r = xc & zt & (xt ^ zc ^ 1)
        x ^= xc << t
        z ^= zt << c
        return x, z, r
    q = qubits[0] - 1
    xq, zq = (x >> q) & 1, (z >> q) & 1
    if name == "H":
        x = (x & ~(1 << q)) | (zq << q)
        z = (z & ~(1 << q)) | (xq << q)
        return x, z, xq & zq
    if name == "S":
        return x, z ^ (xq << q), xq & zq
    # X
    return x, z, zq


def conjugate_pauli_by_clifford(circuit: CliffordCircuit, p: PauliString) -> PauliString:
    """``V P V^dagger`` with ``V`` the circuit unitary, phase tracked exactly."""
    if p.n_qubits != circuit.n_qubits:
        raise ValueError("register width mismatch")
    x, z, e = p.x, p.z, p.phase
    for name, qubits in circuit.gates:
        x, z, r = _conjugate_gate(name, qubits, x, z)
        e += 2 * r
    return PauliString(p.n_qubits, x, z, e)


def invert_clifford(c: CliffordCircuit) -> CliffordCircuit:
    gates = []
    for name, qs in reversed(c.gates):
        gates.extend([(name, qs)] * (3 if name == "S" else 1))
    return CliffordCircuit(c.n_qubits, tuple(gates))


_GATE_MATRICES = {
    "H": np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2),
    "S": np.diag([1, 1j]),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
}


def clifford_unitary(c: CliffordCircuit) -> np.ndarray:
    n = c.n_qubits
    dim = 2**n
    out = np.eye(dim, dtype=complex)
    idx = np.arange(dim)
    for name, qubits in c.gates:
        if name == "CNOT":
            ctl, tgt = (n - q for q in qubits)
            perm = np.where((idx >> ctl) & 1, idx ^ (1 << tgt), idx)
            g = np.eye(dim, dtype=complex)[perm]
        else:
            q = qubits[0]
            g = np.kron(np.kron(np.eye(2 ** (q - 1)), _GATE_MATRICES[name]), np.eye(2 ** (n - q)))
        out = g @ out
    return out


def random_clifford_circuit(n: int, n_gates: int | None = None, seed=None) -> CliffordCircuit:
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    n_gates = 4 * n if n_gates is None else n_gates
    names = ["H", "S", "X"] + (["CNOT"] if n > 1 else [])
    gates = []
    for _ in range(n_gates):
        name = names[rng.integers(len(names))]
        if name == "CNOT":
            qs = tuple(int(q) + 1 for q in rng.choice(n, size=2, replace=False))
        else:
            qs = (int(rng.integers(n)) + 1,)
        gates.append((name, qs))
    return CliffordCircuit(n, tuple(gates))


def clifford_sandwich_estimate(
    sup_u: SparseSuperOp,
    v1: CliffordCircuit,
    v2: CliffordCircuit,
    ch_w: NoisyChannel,
    plan: EstimationPlan,
    seed=None,
    on_batch: BatchHook | None = None,
) -> EstimationResult:
    """Estimate ``F_e(E_W, W)`` for ``W = V2 U V1`` (``V1`` applied first).

    Pairs are drawn from the distribution of ``U`` itself; each pair is
    mapped to the strings ``V2 c_I V2^dagger`` (measured) and
    ``V1^dagger c_J V1`` (prepared), whose entry in ``W`` equals
    ``chi_U(I, J)``.
    """
    n = sup_u.n_qubits
    if v1.n_qubits != n or v2.n_qubits != n:
        raise ValueError("Clifford circuits act on a different register")
    v1_inv = invert_clifford(v1)

    def strings(I, J):
        meas = conjugate_pauli_by_clifford(v2, monomial_to_pauli(I, n))
        prep = conjugate_pauli_by_clifford(v1_inv, monomial_to_pauli(J, n))
        return meas, prep

    return _run(sup_u, ShotSimulator(ch_w), plan, seed, strings, on_batch)
