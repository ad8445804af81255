"""Batch scenario runner: einselection demos, redundancy sweeps, counting
probability studies, and envariance certificates with deterministic
structured output.

Exit codes: 0 success, 2 validation failure, 3 dimension guard, 4 I/O.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import errors
from .envariance import (
    born_probabilities,
    envariant_swap,
    find_commensurate_denominator,
    is_envariant,
    rational_bounds,
    schmidt_phase_unitary,
    schmidt_probabilities,
)
from .info_measures import (
    FragmentSpec,
    basis_conditioned_mutual_information,
    mutual_information,
    redundancy_report,
    von_neumann_entropy,
)
from .measurement_models import (
    BranchSpec,
    build_branch_state,
    cascade_environment,
)
from .tensor_core import (
    PureState,
    SpaceLayout,
    SubsystemUnitary,
    partial_trace,
    schmidt_decompose,
)

SCENARIOS = ("einselect", "redundancy", "born", "envariance", "cascade")

EXIT_VALIDATION = 2
EXIT_DIM_GUARD = 3
EXIT_IO = 4


class ValidationFailure(Exception):
    """Config rejected before any state vector is allocated."""

    def __init__(self, messages):
        self.messages = dict(messages)
        super().__init__("; ".join(f"{k}: {v}" for k, v in self.messages.items()))


@dataclass
class ScenarioConfig:
    kind: str
    amplitudes: list[float]
    env_count: int = 8
    overlap: float = 0.0
    m_cap: int = 10 ** 4
    tolerance: float = 1e-10
    bounds_m: list[int] = field(default_factory=list)
    out: str | None = None
    format: str = "csv"

    def validate(self) -> None:
        bad = {}
        if self.kind not in SCENARIOS:
            bad["kind"] = f"unknown scenario {self.kind!r}"
        if len(self.amplitudes) < 1:
            bad["amplitudes"] = "at least one amplitude required"
        elif np.linalg.norm(self.amplitudes) < 1e-12:
            bad["amplitudes"] = "amplitude vector is zero"
        if self.env_count < 0:
            bad["env_count"] = "environment count must be >= 0"
        if not 0.0 <= self.overlap <= 1.0:
            bad["overlap"] = f"overlap {self.overlap} outside [0, 1]"
        if self.m_cap < 1:
            bad["m_cap"] = "denominator cap must be >= 1"
        if self.tolerance <= 0:
            bad["tolerance"] = "tolerance must be positive"
        if any(m < 1 for m in self.bounds_m):
            bad["bounds_m"] = "bounding denominators must be >= 1"
        if self.format not in ("csv", "json"):
            bad["format"] = f"unknown format {self.format!r}"
        if self.kind in ("einselect", "redundancy", "cascade", "envariance") \
                and len(self.amplitudes) < 2:
            bad["amplitudes"] = "scenario needs at least two amplitudes"
        if bad:
            raise ValidationFailure(bad)

    def unit_amplitudes(self) -> np.ndarray:
        a = np.asarray(self.amplitudes, dtype=complex)
        return a / np.linalg.norm(a)


@dataclass
class RunResult:
    config: ScenarioConfig
    tables: dict            # name -> {"columns": [...], "rows": [[...]]}
    residuals: dict         # invariant name -> max observed residual
    duration_s: float


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".9g")
    return str(x)


# ---------------------------------------------------------------------------
# scenario pipelines

def _run_einselect(cfg: ScenarioConfig) -> tuple[dict, dict]:
    amps = cfg.unit_amplitudes()
    d = amps.size
    spec = BranchSpec("S", d, amps, cfg.overlap)
    state = build_branch_state(spec, apparatus="A", environments=["E"])
    rho_sa = partial_trace(state, ["S", "A"])
    mat = rho_sa.matrix
    offdiag = float(np.max(np.abs(mat - np.diag(np.diag(mat)))))
    mi = mutual_information(state, FragmentSpec(("S", "A"), ("E",)))
    rows = [[k, float(abs(amps[k]) ** 2), offdiag, mi] for k in range(d)]
    tables = {"einselect": {
        "columns": ["branch_index", "population", "offdiag_max",
                    "mi_sae_bits"],
        "rows": rows,
    }}
    norm_gap = float(abs(np.linalg.norm(state.amplitudes) - 1.0))
    return tables, {"global_norm_gap": norm_gap}


def _run_redundancy(cfg: ScenarioConfig) -> tuple[dict, dict]:
    amps = cfg.unit_amplitudes()
    d = amps.size
    spec = BranchSpec("S", d, amps, cfg.overlap)
    envs = [f"E{i + 1}" for i in range(cfg.env_count)]
    state = build_branch_state(spec, apparatus="A", environments=envs)
    report = redundancy_report(state, ("S",), [(e,) for e in envs])
    rows = [[i, mi, cum, ratio] for i, mi, cum, ratio in report.rows()]
    tables = {"redundancy": {
        "columns": ["fragment_index", "mi_bits", "cumulative_bits", "ratio"],
        "rows": rows,
    }}
    residuals = {
        "mi_sum_gap": abs(report.mi_sum - sum(report.per_fragment_mi)),
        "system_entropy_bits": report.system_entropy,
    }
    return tables, residuals


def _born_state(amps: np.ndarray, env_dim: int) -> PureState:
    d = amps.size
    mat = np.zeros((d, env_dim), dtype=complex)
    for k in range(d):
        mat[k, k] = amps[k]
    layout = SpaceLayout([("S", d), ("E", env_dim)])
    return PureState(layout, mat.ravel())


def _run_born(cfg: ScenarioConfig) -> tuple[dict, dict]:
    amps = cfg.unit_amplitudes()
    probs = np.abs(amps) ** 2
    tables = {}
    residuals = {}
    try:
        m, _counts = find_commensurate_denominator(
            probs, cfg.tolerance, cfg.m_cap
        )
    except errors.UseBoundsInstead:
        m = None
    if m is not None:
        state = _born_state(amps, m)
        counted = born_probabilities(state, ("S",), cfg.tolerance, cfg.m_cap)
        squared = schmidt_probabilities(state, ("S",))
        rows = [[k, counted[k], squared[k], abs(counted[k] - squared[k])]
                for k in range(counted.size)]
        tables["born"] = {
            "columns": ["outcome_index", "p_counting",
                        "p_amplitude_squared", "abs_gap"],
            "rows": rows,
        }
        residuals["max_abs_gap"] = float(np.max(np.abs(counted - squared)))
    bounds_m = cfg.bounds_m or ([] if m is not None else [100, 1000, 10000])
    if bounds_m:
        state = _born_state(amps, amps.size)
        rows = []
        for bm in bounds_m:
            bound = rational_bounds(state, ("S",), bm)
            for k in range(bound.lower.size):
                rows.append([bm, k, bound.lower[k], bound.upper[k],
                             bound.upper[k] - bound.lower[k]])
        tables["bounds"] = {
            "columns": ["m_used", "outcome_index", "lower", "upper", "width"],
            "rows": rows,
        }
        residuals["max_bound_width"] = max(r[4] for r in rows)
    return tables, residuals


def _run_envariance(cfg: ScenarioConfig) -> tuple[dict, dict]:
    amps = cfg.unit_amplitudes()
    state = _born_state(amps, amps.size)
    sd = schmidt_decompose(state, ("S",))
    rng = np.random.default_rng(20040971)
    rows = []
    phases = np.pi * (1.0 + np.arange(sd.rank)) / sd.rank
    tests = [("schmidt_phase", schmidt_phase_unitary(sd, phases))]
    if sd.rank >= 2:
        _, counter = envariant_swap(state, 0, 1, sd)
        swap_sys = SubsystemUnitary(
            sd.left_labels,
            _swap_matrix(sd.left_basis, 0, 1),
        )
        tests.append(("system_swap_01", swap_sys))
    gauss = rng.normal(size=(amps.size, amps.size)) \
        + 1j * rng.normal(size=(amps.size, amps.size))
    tests.append(("random_system_unitary",
                  SubsystemUnitary(("S",), np.linalg.qr(gauss)[0])))
    for name, u in tests:
        verdict = is_envariant(state, u, ("E",))
        rows.append([name, int(verdict.envariant), verdict.residual,
                     verdict.witness_trace_distance])
    tables = {"envariance": {
        "columns": ["test", "envariant", "residual",
                    "witness_trace_distance"],
        "rows": rows,
    }}
    residuals = {"max_true_residual": max(
        (r[2] for r in rows if r[1]), default=0.0)}
    return tables, residuals


def _swap_matrix(basis: np.ndarray, k: int, l: int) -> np.ndarray:
    a, b = basis[:, k], basis[:, l]
    m = np.eye(basis.shape[0], dtype=complex)
    m += np.outer(a, b.conj()) + np.outer(b, a.conj())
    m -= np.outer(a, a.conj()) + np.outer(b, b.conj())
    return m


def _run_cascade(cfg: ScenarioConfig) -> tuple[dict, dict]:
    amps = cfg.unit_amplitudes()
    d = amps.size
    n = cfg.env_count
    spec = BranchSpec("S", d, amps, 0.0)
    immediate = [f"E{i + 1}" for i in range(n)]
    distant = [f"F{i + 1}" for i in range(n)]
    state = build_branch_state(spec, apparatus=None, environments=immediate)
    from .tensor_core import basis_state, tensor_product
    for lab in distant:
        state = tensor_product(
            state, basis_state(SpaceLayout([(lab, d)]), [0]))
    state = cascade_environment(state, immediate, distant)
    pointer_basis = np.eye(d)
    conjugate_basis = np.array(
        [[np.exp(2j * np.pi * i * j / d) / np.sqrt(d) for j in range(d)]
         for i in range(d)]
    )
    rows = []
    for i, lab in enumerate(distant):
        split = FragmentSpec(("S",), (lab,))
        mi_ptr = basis_conditioned_mutual_information(
            state, split, pointer_basis)
        mi_conj = basis_conditioned_mutual_information(
            state, split, conjugate_basis)
        rows.append([i, mi_ptr, mi_conj])
    tables = {"cascade": {
        "columns": ["fragment_index", "pointer_basis_mi_bits",
                    "conjugate_basis_mi_bits"],
        "rows": rows,
    }}
    residuals = {"max_conjugate_mi": max((r[2] for r in rows), default=0.0)}
    return tables, residuals


_PIPELINES = {
    "einselect": _run_einselect,
    "redundancy": _run_redundancy,
    "born": _run_born,
    "envariance": _run_envariance,
    "cascade": _run_cascade,
}


def run_scenario(cfg: ScenarioConfig) -> RunResult:
    cfg.validate()
    start = time.perf_counter()
    tables, residuals = _PIPELINES[cfg.kind](cfg)
    return RunResult(cfg, tables, residuals, time.perf_counter() - start)


# ---------------------------------------------------------------------------
# output

def render_csv(result: RunResult) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    for name, table in result.tables.items():
        writer.writerow(["table", name])
        writer.writerow(table["columns"])
        for row in table["rows"]:
            writer.writerow([_fmt(x) for x in row])
    return buf.getvalue()


def render_json(result: RunResult) -> str:
    doc = {
        "scenario": {
            "kind": result.config.kind,
            "amplitudes": [float(a) for a in result.config.amplitudes],
            "env_count": result.config.env_count,
            "overlap": result.config.overlap,
            "m_cap": result.config.m_cap,
            "tolerance": result.config.tolerance,
        },
        "tables": {
            name: {
                "columns": t["columns"],
                "rows": [[_fmt(x) for x in row] for row in t["rows"]],
            }
            for name, t in result.tables.items()
        },
        "residuals": {k: _fmt(v) for k, v in result.residuals.items()},
        "duration_s": result.duration_s,
    }
    return json.dumps(doc, indent=2) + "\n"


def emit_report(result: RunResult, fmt: str, out: str | None) -> None:
    text = render_csv(result) if fmt == "csv" else render_json(result)
    if out is None or out == "-":
        sys.stdout.write(text)
        return
    tmp = f"{out}.tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    import os
    os.replace(tmp, out)


# ---------------------------------------------------------------------------
# argument handling

def _parse_float_list(text: str) -> list[float]:
    return [float(tok) for tok in text.replace(",", " ").split()]


def _parse_int_list(text: str) -> list[int]:
    return [int(tok) for tok in text.replace(",", " ").split()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="envlab",
        description="Deterministic decoherence / record-redundancy / "
                    "counting-probability experiment runner.",
    )
    sub = parser.add_subparsers(dest="kind", required=True)
    for kind in SCENARIOS:
        p = sub.add_parser(kind)
        p.add_argument("--config", help="JSON config document")
        p.add_argument("--amplitudes", type=_parse_float_list,
                       help="comma- or space-separated branch amplitudes")
        p.add_argument("--env-count", type=int, default=None)
        p.add_argument("--overlap", type=float, default=None)
        p.add_argument("--m-cap", type=int, default=None)
        p.add_argument("--tolerance", type=float, default=None)
        p.add_argument("--bounds-m", type=_parse_int_list, default=None,
                       help="denominators for interval bounding")
        p.add_argument("--out", default=None, help="output path ('-' = stdout)")
        p.add_argument("--format", choices=("csv", "json"), default=None)
    return parser


def config_from_args(args) -> ScenarioConfig:
    doc = {}
    if args.config:
        try:
            with open(args.config) as fh:
                doc = json.load(fh)
        except OSError as exc:
            raise ValidationFailure({"config": f"cannot read: {exc}"})
        except json.JSONDecodeError as exc:
            raise ValidationFailure({"config": f"invalid JSON: {exc}"})
    def pick(flag, key, default):
        if flag is not None:
            return flag
        return doc.get(key, default)
    amplitudes = pick(args.amplitudes, "amplitudes", None)
    if amplitudes is None:
        raise ValidationFailure(
            {"amplitudes": "required (flag or config field)"})
    return ScenarioConfig(
        kind=args.kind,
        amplitudes=[float(a) for a in amplitudes],
        env_count=int(pick(args.env_count, "env_count", 8)),
        overlap=float(pick(args.overlap, "overlap", 0.0)),
        m_cap=int(pick(args.m_cap, "m_cap", 10 ** 4)),
        tolerance=float(pick(args.tolerance, "tolerance", 1e-10)),
        bounds_m=[int(m) for m in pick(args.bounds_m, "bounds_m", [])],
        out=pick(args.out, "out", None),
        format=pick(args.format, "format", "csv"),
    )


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = config_from_args(args)
        result = run_scenario(cfg)
    except ValidationFailure as exc:
        json.dump({"error": "validation", "fields": exc.messages},
                  sys.stderr, indent=2)
        sys.stderr.write("\n")
        return EXIT_VALIDATION
    except errors.SpaceTooLarge as exc:
        json.dump({"error": "dimension_guard", "detail": str(exc)},
                  sys.stderr, indent=2)
        sys.stderr.write("\n")
        return EXIT_DIM_GUARD
    except errors.EnvLabError as exc:
        json.dump({"error": "validation",
                   "fields": {"scenario": f"{type(exc).__name__}: {exc}"}},
                  sys.stderr, indent=2)
        sys.stderr.write("\n")
        return EXIT_VALIDATION
    try:
        emit_report(result, cfg.format, cfg.out)
    except OSError as exc:
        json.dump({"error": "io", "detail": str(exc)}, sys.stderr, indent=2)
        sys.stderr.write("\n")
        return EXIT_IO
    return 0


if __name__ == "__main__":
    sys.exit(main())
