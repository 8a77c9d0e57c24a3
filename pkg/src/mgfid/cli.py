"""Command-line driver.

Subcommands ``superop``, ``benchmark``, ``tomography``, ``euler`` and
``sandwich`` each validate their arguments, compute everything in memory and
only then write their output files, so a failed run leaves nothing behind.
All randomness derives from ``--seed`` through named substreams.

Exit codes: 0 success, 2 configuration error, 3 size guard or shot budget.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
from dataclasses import dataclass
from math import sqrt
from pathlib import Path
from typing import Sequence

import numpy as np

from .clifford import monomial_to_pauli
from .estimator import (
    CliffordCircuit,
    ShotBudgetError,
    clifford_sandwich_estimate,
    clifford_unitary,
    conjugate_pauli_by_clifford,
    estimate_fidelity,
    expected_total_shots,
    invert_clifford,
    load_clifford,
    plan_runtime,
)
from .euler import assemble_superop_via_euler, euler_angles, rotation_from_angles, write_angle_table
from .matchgate import (
    MatchgateCircuit,
    circuit_to_rotation,
    fsim,
    haar_random_rotation,
    is_matchgate,
    load_circuit,
    random_givens_circuit,
    random_xy_circuit,
    unitary_from_rotation,
)
from .simulator import NoisyChannel, parse_noise, write_shot_log
from .superop import (
    MAX_DENSE_QUBITS,
    MAX_ENUMERATED_QUBITS,
    SparseSuperOp,
    brute_force_superop,
    matchgate_superop,
    oracle_entanglement_fidelity,
    sparsity_count,
    well_conditioning_alpha,
    write_superop_csv,
)
from .tomography import TomographyConfig, format_matrix, run_tomography

EXIT_OK, EXIT_CONFIG, EXIT_GUARD = 0, 2, 3

_STREAMS = {"circuit": 1, "estimate": 2, "tomography": 3}


class ConfigError(Exception):
    pass


class GuardError(Exception):
    pass


def _stream(seed: int, name: str, *index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(seed, spawn_key=(_STREAMS[name],) + index)


# -- circuit sources ----------------------------------------------------------


@dataclass(frozen=True)
class Target:
    label: str
    n_qubits: int
    unitary: np.ndarray
    rotation: np.ndarray | None

    @property
    def is_matchgate(self) -> bool:
        return self.rotation is not None


_RANDOM_SOURCES = ("haar", "givens", "xy")


def _parse_source(text: str) -> tuple[str, tuple[float, ...]]:
    low = text.lower()
    if low in _RANDOM_SOURCES or low == "identity":
        return low, ()
    if low.startswith("fsim:"):
        parts = text.split(":")
        if len(parts) != 3:
            raise ConfigError("fsim source must look like fsim:THETA:PHI")
        try:
            return "fsim", (float(parts[1]), float(parts[2]))
        except ValueError:
            raise ConfigError(f"bad fsim angles in {text!r}") from None
    path = Path(text)
    if not path.is_file():
        raise ConfigError(f"circuit file {text!r} not found")
    return "file", ()


def _circuit_target(c: MatchgateCircuit, label: str) -> Target:
    mg = all(is_matchgate(g) for _, g in c.gates)
    rot = np.asarray(circuit_to_rotation(c)) if mg else None
    return Target(label, c.n_qubits, c.unitary(), rot)


def _resolve_source(args) -> str:
    picks = []
    if args.circuit:
        picks.append(args.circuit)
    if getattr(args, "haar", False):
        picks.append("haar")
    if getattr(args, "identity", False):
        picks.append("identity")
    if getattr(args, "fsim", None):
        picks.append("fsim:%r:%r" % tuple(args.fsim))
    if len(picks) > 1:
        raise ConfigError("choose exactly one circuit source")
    return picks[0] if picks else "haar"


def _source_n(args, kind: str, source: str) -> int:
    if kind == "fsim":
        if args.n not in (None, 2):
            raise ConfigError("fsim sources act on exactly 2 qubits")
        return 2
    if kind == "file":
        try:
            n = load_circuit(source, matchgate_only=False).n_qubits
        except ValueError as exc:
            raise ConfigError(f"{source}: {exc}") from None
        if args.n not in (None, n):
            raise ConfigError(f"circuit file has {n} qubits, --n says {args.n}")
        return n
    n = 3 if args.n is None else args.n
    if n < 1 or (kind != "identity" and n < 2):
        raise ConfigError("need at least 2 qubits for random circuits")
    return n


def build_target(source: str, n: int, seed: int, run: int = 0) -> Target:
    kind, params = _parse_source(source)
    ss = _stream(seed, "circuit", run)
    if kind == "haar":
        rot = np.asarray(haar_random_rotation(n, np.random.default_rng(ss)))
        return Target("haar", n, unitary_from_rotation(rot), rot)
    if kind == "givens":
        return _circuit_target(random_givens_circuit(n, seed=np.random.default_rng(ss)), "givens")
    if kind == "xy":
        return _circuit_target(random_xy_circuit(n, seed=np.random.default_rng(ss)), "xy")
    if kind == "identity":
        return Target("identity", n, np.eye(2**n, dtype=complex), np.eye(2 * n))
    if kind == "fsim":
        c = MatchgateCircuit(2, ((1, fsim(*params)),), matchgate_only=False)
        return _circuit_target(c, source)
    try:
        c = load_circuit(source, matchgate_only=False)
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    return _circuit_target(c, source)


def ideal_superop(t: Target) -> tuple[SparseSuperOp, str]:
    if t.is_matchgate:
        if t.n_qubits > MAX_ENUMERATED_QUBITS:
            raise GuardError(f"superoperator enumeration limited to n <= {MAX_ENUMERATED_QUBITS}")
        return matchgate_superop(t.rotation), "minors"
    if t.n_qubits > MAX_DENSE_QUBITS:
        raise GuardError(f"dense superoperator limited to n <= {MAX_DENSE_QUBITS}")
    return SparseSuperOp.from_dense(brute_force_superop(t.unitary), t.n_qubits), "brute_force"


# -- validation helpers -------------------------------------------------------


def _check_unit(name: str, value: float | None) -> None:
    if value is not None and not 0 < value < 1:
        raise ConfigError(f"{name} must lie in (0, 1), got {value}")


def _noise(args):
    try:
        return parse_noise(args.noise)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _alpha(args, sup: SparseSuperOp | None) -> float | None:
    if args.alpha is None:
        return None
    if args.alpha == "auto":
        return None if sup is None else well_conditioning_alpha(sup)
    try:
        a = float(args.alpha)
    except ValueError:
        raise ConfigError(f"--alpha must be a number or 'auto', got {args.alpha!r}") from None
    if not 0 < a <= 1:
        raise ConfigError("--alpha must lie in (0, 1]")
    return a


def _plan(args, sup: SparseSuperOp):
    try:
        return plan_runtime(args.eps, args.delta, sup, _alpha(args, sup), args.bound, shot_cap=args.shot_cap)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _check_out(args) -> None:
    if args.out is not None:
        out = Path(args.out)
        if out.exists() and not out.is_dir():
            raise ConfigError(f"--out {args.out!r} exists and is not a directory")


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def write_outputs(out: str | None, files: dict[str, str]) -> None:
    """Write every file through a temporary name so readers never see partial output."""
    if out is None or not files:
        return
    root = Path(out)
    root.mkdir(parents=True, exist_ok=True)
    for name, text in sorted(files.items()):
        fd, tmp = tempfile.mkstemp(dir=root, prefix=f".{name}.")
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, root / name)


# -- commands -----------------------------------------------------------------


def cmd_superop(args) -> tuple[dict[str, str], list[str]]:
    source = _resolve_source(args)
    kind, _ = _parse_source(source)
    n = _source_n(args, kind, source)
    _check_out(args)
    if n > MAX_ENUMERATED_QUBITS:
        raise GuardError(f"superoperator enumeration limited to n <= {MAX_ENUMERATED_QUBITS}")
    t = build_target(source, n, args.seed)
    sup, how = ideal_superop(t)
    n = t.n_qubits
    nz = sparsity_count(sup)
    report = {
        "source": t.label,
        "n_qubits": n,
        "construction": how,
        "nonzeros": nz,
        "density": nz / 4 ** (2 * n),
        "sparsity_bound": 2 ** (4 * n) / sqrt(n),
        "alpha": well_conditioning_alpha(sup),
        "block_structured": sup.block_structured,
        "real": sup.is_real,
    }
    lines = [f"source: {t.label}", f"nonzeros: {nz}", f"alpha: {report['alpha']:.12g}"]
    if args.compare_euler:
        if not t.is_matchgate:
            raise ConfigError("--compare-euler needs a matchgate circuit")
        other = assemble_superop_via_euler(t.rotation)
        diff = float(np.max(np.abs(other.to_scipy() - sup.to_scipy()))) if sup.nnz else 0.0
        report["euler_max_difference"] = diff
        lines.append(f"euler max difference: {diff:.3e}")
    files = {"superop.csv": write_superop_csv(sup), "report.json": _json(report)}
    return files, lines


def _estimation_args(args) -> None:
    _check_unit("--eps", args.eps)
    _check_unit("--delta", args.delta)
    if args.runs < 1:
        raise ConfigError("--runs must be positive")


def cmd_benchmark(args) -> tuple[dict[str, str], list[str]]:
    source = _resolve_source(args)
    kind, _ = _parse_source(source)
    n = _source_n(args, kind, source)
    _estimation_args(args)
    stages = _noise(args)
    _check_out(args)
    _alpha(args, None)
    if n > MAX_DENSE_QUBITS:
        raise GuardError(f"benchmark oracle limited to n <= {MAX_DENSE_QUBITS}")

    rows = []
    files: dict[str, str] = {}
    for run in range(args.runs):
        t = build_target(source, n, args.seed, run)
        sup, _ = ideal_superop(t)
        ch = NoisyChannel(t.n_qubits, t.unitary, stages)
        plan = _plan(args, sup)
        log_rows = [] if args.shot_log else None
        hook = (lambda mu, I, J, b: log_rows.append((mu, I, J, b))) if args.shot_log else None
        res = estimate_fidelity(sup, ch, plan, _stream(args.seed, "estimate", run), on_batch=hook)
        fe = oracle_entanglement_fidelity(ch)
        lo, hi = res.interval
        rows.append(
            {
                "run": run,
                "F_e_oracle": fe,
                "Y_tilde": res.Y_tilde,
                "lower": lo,
                "upper": hi,
                "within": int(abs(res.Y_tilde - fe) <= 2 * args.eps),
                "total_shots": res.total_shots,
                "expected_shots": expected_total_shots(sup, plan),
                "l": plan.l,
            }
        )
        if log_rows is not None:
            buf = io.StringIO()
            write_shot_log(buf, log_rows, t.n_qubits)
            files[f"shots_run{run:03d}.csv"] = buf.getvalue()

    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    coverage = sum(r["within"] for r in rows) / len(rows)
    mean_shots = float(np.mean([r["total_shots"] for r in rows]))
    report = {
        "source": source,
        "n_qubits": n,
        "noise": args.noise,
        "epsilon": args.eps,
        "delta": args.delta,
        "bound": args.bound,
        "runs": args.runs,
        "coverage": coverage,
        "mean_total_shots": mean_shots,
        "mean_abs_error": float(np.mean([abs(r["Y_tilde"] - r["F_e_oracle"]) for r in rows])),
    }
    files["runs.csv"] = buf.getvalue()
    files["report.json"] = _json(report)
    lines = [f"runs: {args.runs}", f"coverage: {coverage:.3f}", f"mean total shots: {mean_shots:.1f}"]
    return files, lines


def cmd_tomography(args) -> tuple[dict[str, str], list[str]]:
    source = _resolve_source(args)
    kind, _ = _parse_source(source)
    n = _source_n(args, kind, source)
    stages = _noise(args)
    if args.shots < 1:
        raise ConfigError("--shots must be positive")
    _check_out(args)
    if n > MAX_DENSE_QUBITS:
        raise GuardError(f"tomography simulation limited to n <= {MAX_DENSE_QUBITS}")
    t = build_target(source, n, args.seed)
    if not t.is_matchgate:
        raise ConfigError("tomography needs a matchgate circuit")
    ch = NoisyChannel(t.n_qubits, t.unitary, stages)
    seed = int(_stream(args.seed, "tomography").generate_state(1)[0])
    res = run_tomography(ch, TomographyConfig(args.shots, seed), t.rotation)
    report = {"source": t.label, "noise": args.noise, **res.summary()}
    files = {
        "R_raw.txt": format_matrix(res.raw),
        "R_tilde.txt": format_matrix(np.asarray(res.rotation)),
        "h_tilde.txt": format_matrix(res.hamiltonian.h),
        "report.json": _json(report),
    }
    lines = [
        f"rotation frobenius error: {res.rotation_error:.4e}",
        f"unitary distance: {res.unitary_distance:.4e}",
    ]
    return files, lines


def cmd_euler(args) -> tuple[dict[str, str], list[str]]:
    source = _resolve_source(args)
    kind, _ = _parse_source(source)
    n = _source_n(args, kind, source)
    _check_out(args)
    if n > 64:
        raise GuardError("rotation dimension too large")
    t = build_target(source, n, args.seed)
    if not t.is_matchgate:
        raise ConfigError("euler needs a matchgate circuit")
    angles = euler_angles(t.rotation)
    residual = float(np.max(np.abs(rotation_from_angles(angles) - t.rotation)))
    n = t.n_qubits
    report = {
        "source": t.label,
        "dim": angles.dim,
        "nonzero_angles": angles.n_nonzero,
        "max_factors": n * (2 * n - 1),
        "round_trip_residual": residual,
    }
    files = {"angles.txt": write_angle_table(angles), "report.json": _json(report)}
    lines = [f"nonzero angles: {angles.n_nonzero}", f"round-trip residual: {residual:.3e}"]
    return files, lines


def _load_clf(path: str | None, n: int) -> CliffordCircuit:
    if path is None:
        return CliffordCircuit(n)
    if not Path(path).is_file():
        raise ConfigError(f"Clifford file {path!r} not found")
    try:
        return load_clifford(path, n)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def sandwich_entry_deviation(sup_u: SparseSuperOp, w: np.ndarray, v1: CliffordCircuit, v2: CliffordCircuit) -> float:
    """Largest ``|chi_W(I', J') - chi_U(I, J)|`` over the stored entries of ``U``."""
    n = sup_u.n_qubits
    v1_inv = invert_clifford(v1)
    worst = 0.0
    for (I, J), chi in sup_u.entries.items():
        meas = conjugate_pauli_by_clifford(v2, monomial_to_pauli(I, n)).to_matrix()
        prep = conjugate_pauli_by_clifford(v1_inv, monomial_to_pauli(J, n)).to_matrix()
        val = np.trace(meas.conj().T @ w @ prep @ w.conj().T) / 2**n
        worst = max(worst, abs(val - chi))
    return float(worst)


def cmd_sandwich(args) -> tuple[dict[str, str], list[str]]:
    source = _resolve_source(args)
    kind, _ = _parse_source(source)
    n = _source_n(args, kind, source)
    _estimation_args(args)
    stages = _noise(args)
    _check_out(args)
    v1 = _load_clf(args.v1, n)
    v2 = _load_clf(args.v2, n)
    if n > MAX_DENSE_QUBITS:
        raise GuardError(f"sandwich oracle limited to n <= {MAX_DENSE_QUBITS}")
    t = build_target(source, n, args.seed)
    sup, _ = ideal_superop(t)
    w = clifford_unitary(v2) @ t.unitary @ clifford_unitary(v1)
    ch_w = NoisyChannel(n, w, stages)
    plan = _plan(args, sup)
    res = clifford_sandwich_estimate(sup, v1, v2, ch_w, plan, _stream(args.seed, "estimate", 0))
    fe = oracle_entanglement_fidelity(ch_w)
    report = {"source": t.label, "noise": args.noise, "F_e_oracle": fe, **res.to_json(include_samples=False)}
    if n <= 3:
        report["max_entry_deviation"] = sandwich_entry_deviation(sup, w, v1, v2)
    lines = [
        f"Y_tilde: {res.Y_tilde:.6f}",
        f"interval: [{res.interval[0]:.6f}, {res.interval[1]:.6f}]",
        f"F_e oracle: {fe:.6f}",
    ]
    return {"report.json": _json(report)}, lines


# -- parser -------------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser, estimation: bool = False) -> None:
    p.add_argument("-n", "--n", type=int, default=None, help="number of qubits")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--circuit", default=None, help="path | haar | givens | xy | identity | fsim:THETA:PHI")
    p.add_argument("--haar", action="store_true", help="alias for --circuit haar")
    p.add_argument("--identity", action="store_true", help="alias for --circuit identity")
    p.add_argument("--fsim", nargs=2, type=float, metavar=("THETA", "PHI"))
    p.add_argument("--out", default=None, help="output directory")
    if estimation:
        p.add_argument("--eps", type=float, default=0.05)
        p.add_argument("--delta", type=float, default=0.1)
        p.add_argument("--alpha", default=None, help="well-conditioning parameter or 'auto'")
        p.add_argument("--noise", default="none", help="kind:param, e.g. depolarizing:0.05")
        p.add_argument("--bound", choices=("box", "appendix"), default="box")
        p.add_argument("--runs", type=int, default=1)
        p.add_argument("--shot-cap", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mgfid", description="Matchgate fidelity estimation toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("superop", help="build the ideal superoperator")
    _add_common(p)
    p.add_argument("--compare-euler", action="store_true")
    p.set_defaults(handler=cmd_superop)

    p = sub.add_parser("benchmark", help="seeded fidelity-estimation sweep")
    _add_common(p, estimation=True)
    p.add_argument("--shot-log", action="store_true", help="write per-shot CSV logs")
    p.set_defaults(handler=cmd_benchmark)

    p = sub.add_parser("tomography", help="learn the rotation of a matchgate circuit")
    _add_common(p)
    p.add_argument("--shots", type=int, default=1000, help="shots per rotation entry")
    p.add_argument("--noise", default="none")
    p.set_defaults(handler=cmd_tomography)

    p = sub.add_parser("euler", help="generalized Euler angles of a circuit's rotation")
    _add_common(p)
    p.set_defaults(handler=cmd_euler)

    p = sub.add_parser("sandwich", help="estimate with Clifford layers around the circuit")
    _add_common(p, estimation=True)
    p.add_argument("--v1", default=None, help="Clifford file applied before the circuit")
    p.add_argument("--v2", default=None, help="Clifford file applied after the circuit")
    p.set_defaults(handler=cmd_sandwich)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        files, lines = args.handler(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (GuardError, ShotBudgetError) as exc:
        print(f"guard: {exc}", file=sys.stderr)
        return EXIT_GUARD
    write_outputs(args.out, files)
    for line in lines:
        print(line)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
