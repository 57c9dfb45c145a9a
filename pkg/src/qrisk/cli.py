"""Command line interface: instance files in, reports out.

Usage::

    qrisk <command> --instance <path> [--format structured|table] [--seed N] [--out <path>]

Commands are ``clear``, ``evaluate``, ``penalty``, ``left-inverse``,
``dual``, ``verify`` and ``selftest``. Exit codes: 0 success, 1 invalid
input, 2 numerical failure, 3 a property check failed (``verify`` and
``selftest`` only).

Instances and structured reports are JSON. Extended reals are written as the
strings ``"inf"`` and ``"-inf"``. Report numbers are rounded to 12
significant digits when the report is built, so writing and re-reading a
report reproduces it exactly.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import aggregation as agg_mod
from . import duality_engine as de
from .convex_kit import left_inverse_bisect
from .errors import ComputationError, QRiskError, ValidationError
from .prob_core import FiniteProbabilitySpace, RandomVector
from .risk_measures import LossKind, RiskForm, RiskMeasureSpec

COMMANDS = ("clear", "evaluate", "penalty", "left-inverse", "dual", "verify", "selftest")
FORMATS = ("structured", "table")
SIG_DIGITS = 12
EXIT_OK, EXIT_INVALID, EXIT_COMPUTATION, EXIT_PROPERTY = 0, 1, 2, 3


class InstanceError(ValidationError):
    """Invalid instance file; ``code`` names the kind of problem and ``field`` where."""

    def __init__(self, code: str, field: str, message: str):
        self.code = code
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


# ---------------------------------------------------------------- instance files


@dataclass(frozen=True)
class VerifySettings:
    box: tuple[float, float] = (-3.0, 3.0)
    x_resolution: int = 21
    density_resolution: int = 21
    trials: int = 200
    weak_duality_samples: int = 200


@dataclass(frozen=True, eq=False)
class InstanceFile:
    space: FiniteProbabilitySpace
    risk_measure: RiskMeasureSpec
    aggregator: agg_mod.AggregatorSpec
    shock: RandomVector | None = None
    xstar: RandomVector | None = None
    m: float | None = None
    s: float | None = None
    optimizer: de.OptimizerSettings = field(default_factory=de.OptimizerSettings)
    verify: VerifySettings = field(default_factory=VerifySettings)
    source: str = "<memory>"


def _number(value: Any, where: str) -> float:
    if isinstance(value, str) and value in ("inf", "-inf"):
        return float(value)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise InstanceError("schema", where, f"expected a number, got {value!r}")
    return float(value)


def _matrix(value: Any, where: str) -> np.ndarray:
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError):
        raise InstanceError("schema", where, "expected a list of numbers or a list of rows") from None
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2 or arr.size == 0:
        raise InstanceError("schema", where, "expected a non-empty list of rows")
    return arr


def _section(doc: dict, key: str, required: bool = True) -> dict:
    if key not in doc:
        if required:
            raise InstanceError("schema", key, "missing section")
        return {}
    sec = doc[key]
    if not isinstance(sec, dict):
        raise InstanceError("schema", key, "expected an object")
    return sec


def _parse_space(doc: dict) -> FiniteProbabilitySpace:
    sec = _section(doc, "space")
    if "probs" not in sec:
        raise InstanceError("schema", "space.probs", "missing")
    probs = _matrix(sec["probs"], "space.probs").reshape(-1)
    total = float(probs.sum())
    if abs(total - 1.0) > 1e-12:
        raise InstanceError("probability_sum", "space.probs", f"probabilities must sum to 1 (got {total!r})")
    try:
        return FiniteProbabilitySpace(probs)
    except ValidationError as exc:
        raise InstanceError("probability", "space.probs", str(exc)) from None


def _parse_risk(doc: dict) -> RiskMeasureSpec:
    sec = _section(doc, "risk_measure")
    form = sec.get("form", "certainty_equivalent")
    loss = sec.get("loss")
    forms = [f.value for f in RiskForm]
    losses = [k.value for k in LossKind]
    if form not in forms:
        raise InstanceError("unknown_risk_measure", "risk_measure.form", f"unknown risk-measure form {form!r} (known: {forms})")
    if form == RiskForm.ECONOMIC_INDEX.value:
        loss = loss or LossKind.INDEX_LOGARITHMIC.value
    if loss not in losses:
        raise InstanceError("unknown_risk_measure", "risk_measure.loss", f"unknown risk-measure kind {loss!r} (known: {losses})")
    try:
        if form == RiskForm.ECONOMIC_INDEX.value:
            if loss != LossKind.INDEX_LOGARITHMIC.value:
                raise InstanceError("unknown_risk_measure", "risk_measure.loss", "the economic index supports the index_logarithmic loss only")
            return RiskMeasureSpec.economic_index(_number(sec.get("c0"), "risk_measure.c0"))
        gamma = sec.get("gamma")
        return RiskMeasureSpec.certainty_equivalent(loss, None if gamma is None else _number(gamma, "risk_measure.gamma"))
    except InstanceError:
        raise
    except ValidationError as exc:
        raise InstanceError("risk_measure", "risk_measure", str(exc)) from None


def _parse_aggregator(doc: dict) -> agg_mod.AggregatorSpec:
    sec = _section(doc, "aggregator")
    kind = sec.get("kind")
    kinds = [k.value for k in agg_mod.AggregatorKind]
    if kind not in kinds:
        raise InstanceError("unknown_aggregator", "aggregator.kind", f"unknown aggregator {kind!r} (known: {kinds})")
    if kind != agg_mod.AggregatorKind.EISENBERG_NOE.value:
        if "liabilities" in sec:
            raise InstanceError("schema", "aggregator.liabilities", "only the eisenberg_noe aggregator takes liabilities")
        return agg_mod.AggregatorSpec(agg_mod.AggregatorKind(kind))
    if "liabilities" not in sec:
        raise InstanceError("schema", "aggregator.liabilities", "missing liability matrix")
    L = _matrix(sec["liabilities"], "aggregator.liabilities")
    try:
        return agg_mod.AggregatorSpec.eisenberg_noe(L)
    except ValidationError as exc:
        raise InstanceError("network_invariant", "aggregator.liabilities", str(exc)) from None


def _random_vector(value: Any, where: str, space: FiniteProbabilitySpace) -> RandomVector:
    arr = _matrix(value, where)
    try:
        return RandomVector(arr, space)
    except ValidationError as exc:
        raise InstanceError("schema", where, str(exc)) from None


def instance_from_dict(doc: Any, source: str = "<memory>") -> InstanceFile:
    """Validate a decoded instance document."""
    if not isinstance(doc, dict):
        raise InstanceError("schema", "", "instance must be a JSON object")
    known = {"space", "risk_measure", "aggregator", "shock", "query", "optimizer", "verify", "description"}
    extra = sorted(set(doc) - known)
    if extra:
        raise InstanceError("schema", extra[0], f"unknown section (known: {sorted(known)})")
    space = _parse_space(doc)
    rho = _parse_risk(doc)
    agg = _parse_aggregator(doc)
    shock = _random_vector(doc["shock"], "shock", space) if "shock" in doc else None
    if shock is not None and agg.network is not None:
        if shock.n != agg.network.n:
            raise InstanceError("schema", "shock", f"{shock.n} columns for {agg.network.n} banks")
        if np.any(shock.values < 0.0):
            raise InstanceError("domain", "shock", "network shocks must be nonnegative")
    query = _section(doc, "query", required=False)
    xstar = _random_vector(query["xstar"], "query.xstar", space) if "xstar" in query else None
    m = _number(query["m"], "query.m") if "m" in query else None
    s = _number(query["s"], "query.s") if "s" in query else None
    opt = _section(doc, "optimizer", required=False)
    try:
        settings = de.OptimizerSettings(
            starts=int(opt.get("starts", 20)), seed=int(opt.get("seed", 0)), iterations=int(opt.get("iterations", 500))
        )
    except (TypeError, ValueError) as exc:
        raise InstanceError("schema", "optimizer", str(exc)) from None
    ver = _section(doc, "verify", required=False)
    try:
        box = ver.get("box", [-3.0, 3.0])
        vs = VerifySettings(
            box=(_number(box[0], "verify.box"), _number(box[1], "verify.box")),
            x_resolution=int(ver.get("x_resolution", 21)),
            density_resolution=int(ver.get("density_resolution", 21)),
            trials=int(ver.get("trials", 200)),
            weak_duality_samples=int(ver.get("weak_duality_samples", 200)),
        )
    except (TypeError, ValueError, IndexError) as exc:
        raise InstanceError("schema", "verify", str(exc)) from None
    return InstanceFile(space, rho, agg, shock, xstar, m, s, settings, vs, source)


def parse_instance_text(text: str, source: str = "<memory>") -> InstanceFile:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceError("syntax", f"line {exc.lineno}, column {exc.colno}", exc.msg) from None
    return instance_from_dict(doc, source)


def parse_instance(path: str | Path) -> InstanceFile:
    """Read and validate an instance file."""
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise InstanceError("io", str(p), str(exc)) from None
    return parse_instance_text(text, str(p))


def _ext(x: float) -> float | str:
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return float(x)


def instance_to_dict(inst: InstanceFile) -> dict:
    """Inverse of :func:`instance_from_dict` up to defaults."""
    rho = inst.risk_measure
    risk: dict[str, Any] = {"form": rho.form.value, "loss": rho.loss.kind.value}
    if rho.loss.gamma is not None:
        risk["gamma"] = rho.loss.gamma
    if rho.loss.c0 is not None:
        risk["c0"] = rho.loss.c0
    aggregator: dict[str, Any] = {"kind": inst.aggregator.kind.value}
    if inst.aggregator.network is not None:
        aggregator["liabilities"] = inst.aggregator.network.liabilities.tolist()
    doc: dict[str, Any] = {"space": {"probs": inst.space.probs.tolist()}, "risk_measure": risk, "aggregator": aggregator}
    if inst.shock is not None:
        doc["shock"] = inst.shock.values.tolist()
    query: dict[str, Any] = {}
    if inst.xstar is not None:
        query["xstar"] = inst.xstar.values.tolist()
    if inst.m is not None:
        query["m"] = _ext(inst.m)
    if inst.s is not None:
        query["s"] = _ext(inst.s)
    if query:
        doc["query"] = query
    o = inst.optimizer
    doc["optimizer"] = {"starts": o.starts, "seed": o.seed, "iterations": o.iterations}
    v = inst.verify
    doc["verify"] = {
        "box": list(v.box),
        "x_resolution": v.x_resolution,
        "density_resolution": v.density_resolution,
        "trials": v.trials,
        "weak_duality_samples": v.weak_duality_samples,
    }
    return doc


# ---------------------------------------------------------------- reports


def round_sig(x: float) -> float:
    """Round to 12 significant digits; infinities pass through."""
    if not math.isfinite(x):
        return x
    return float(f"{x:.{SIG_DIGITS}g}")


def _clean(obj: Any) -> Any:
    """Round every float in a nested structure and freeze lists as lists."""
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return round_sig(float(obj))
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if obj is None or isinstance(obj, str):
        return obj
    raise TypeError(f"cannot serialise {type(obj).__name__}")


@dataclass(frozen=True)
class CheckSummary:
    name: str
    ok: bool
    detail: str = ""


@dataclass(frozen=True)
class RunReport:
    command: str
    seed: int
    primal: float | None = None
    dual_bound: float | None = None
    gap: float | None = None
    best: dict | None = None
    results: dict = field(default_factory=dict)
    checks: tuple[CheckSummary, ...] = ()
    wall_time: float = 0.0

    def __post_init__(self) -> None:
        for name in ("primal", "dual_bound", "gap"):
            v = getattr(self, name)
            if v is not None:
                object.__setattr__(self, name, round_sig(float(v)))
        object.__setattr__(self, "best", None if self.best is None else _clean(self.best))
        object.__setattr__(self, "results", _clean(self.results))
        object.__setattr__(self, "checks", tuple(self.checks))

    @property
    def checks_ok(self) -> bool:
        return all(c.ok for c in self.checks)


def _encode(obj: Any) -> Any:
    if isinstance(obj, float):
        if math.isnan(obj):
            return "nan"
        if math.isinf(obj):
            return "inf" if obj > 0 else "-inf"
        return obj
    if isinstance(obj, list):
        return [_encode(v) for v in obj]
    if isinstance(obj, dict):
        return {k: _encode(v) for k, v in obj.items()}
    return obj


def _decode(obj: Any) -> Any:
    if isinstance(obj, str) and obj in ("inf", "-inf", "nan"):
        return float(obj)
    if isinstance(obj, list):
        return [_decode(v) for v in obj]
    if isinstance(obj, dict):
        return {k: _decode(v) for k, v in obj.items()}
    return obj


def report_to_dict(report: RunReport, include_timing: bool = False) -> dict:
    doc: dict[str, Any] = {
        "command": report.command,
        "seed": report.seed,
        "primal": report.primal,
        "dual_bound": report.dual_bound,
        "gap": report.gap,
        "best": report.best,
        "results": report.results,
        "checks": [{"name": c.name, "ok": c.ok, "detail": c.detail} for c in report.checks],
    }
    if include_timing:
        doc["wall_time"] = report.wall_time
    return _encode(doc)


def report_from_dict(doc: dict) -> RunReport:
    doc = _decode(doc)
    return RunReport(
        command=doc["command"],
        seed=int(doc["seed"]),
        primal=doc.get("primal"),
        dual_bound=doc.get("dual_bound"),
        gap=doc.get("gap"),
        best=doc.get("best"),
        results=doc.get("results", {}),
        checks=tuple(CheckSummary(c["name"], bool(c["ok"]), c.get("detail", "")) for c in doc.get("checks", [])),
        wall_time=float(doc.get("wall_time", 0.0)),
    )


def _fmt(v: Any) -> str:
    if isinstance(v, float):
        return f"{v:.{SIG_DIGITS}g}"
    if isinstance(v, list):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    return str(v)


def emit_report(report: RunReport, format: str = "structured") -> bytes:
    """Serialise a report; identical reports give identical bytes.

    The structured form is JSON without timing. The table form is for
    reading and includes the wall time.
    """
    if format == "structured":
        text = json.dumps(report_to_dict(report), indent=2, sort_keys=True)
        return (text + "\n").encode("utf-8")
    if format != "table":
        raise ValidationError(f"unknown format {format!r} (known: {FORMATS})")
    lines = [f"command     {report.command}", f"seed        {report.seed}"]
    for name in ("primal", "dual_bound", "gap"):
        v = getattr(report, name)
        if v is not None:
            lines.append(f"{name:<11} {_fmt(v)}")
    for key in sorted(report.results):
        lines.append(f"{key:<11} {_fmt(report.results[key])}")
    if report.best is not None:
        for key in sorted(report.best):
            lines.append(f"best.{key:<6} {_fmt(report.best[key])}")
    if report.checks:
        lines.append("")
        width = max(len(c.name) for c in report.checks)
        for c in report.checks:
            lines.append(f"{'PASS' if c.ok else 'FAIL'}  {c.name:<{width}}  {c.detail}".rstrip())
    lines.append("")
    lines.append(f"wall time   {report.wall_time:.3f} s")
    return ("\n".join(lines) + "\n").encode("utf-8")


# ---------------------------------------------------------------- commands


def _need(value: Any, what: str, command: str) -> Any:
    if value is None:
        raise InstanceError("schema", what, f"required by the {command} command")
    return value


def _dual_dict(best: de.DualVariables | None) -> dict | None:
    if best is None:
        return None
    return {
        "w": best.w,
        "s_densities": best.s_densities,
        "q_density": best.q_density.values,
        "lam": best.lam,
    }


def _cmd_clear(inst: InstanceFile) -> RunReport:
    net = _need(inst.aggregator.network, "aggregator.liabilities", "clear")
    shock = _need(inst.shock, "shock", "clear")
    payments, values, lp_values = [], [], []
    for row in shock.values:
        fp = agg_mod.clearing_fixed_point(net, row)
        lp = agg_mod.clearing_lp(net, row)
        payments.append(fp.payments)
        values.append(fp.lambda_value)
        lp_values.append(lp.lambda_value)
    worst = float(np.max(np.abs(np.array(values) - np.array(lp_values))))
    check = CheckSummary("fixed point and LP agree", worst <= 1e-8, f"max difference {worst:.3g}")
    return RunReport("clear", inst.optimizer.seed, results={"payments": payments, "aggregate": values}, checks=(check,))


def _cmd_evaluate(inst: InstanceFile) -> RunReport:
    shock = _need(inst.shock, "shock", "evaluate")
    primal = de.primal_risk(inst.risk_measure, inst.aggregator, shock)
    aggregate = agg_mod.aggregate_points(inst.aggregator, shock.values)
    return RunReport("evaluate", inst.optimizer.seed, primal=primal, results={"aggregate": aggregate})


def _cmd_penalty(inst: InstanceFile) -> RunReport:
    xstar = _need(inst.xstar, "query.xstar", "penalty")
    m = _need(inst.m, "query.m", "penalty")
    v = de.composition_penalty(inst.risk_measure, inst.aggregator, xstar, m, inst.optimizer)
    return RunReport("penalty", inst.optimizer.seed, results={"m": m, "penalty": v})


def _cmd_left_inverse(inst: InstanceFile) -> RunReport:
    xstar = _need(inst.xstar, "query.xstar", "left-inverse")
    s = _need(inst.s, "query.s", "left-inverse")
    v = de.composition_left_inverse(inst.risk_measure, inst.aggregator, xstar, s, inst.optimizer)
    return RunReport("left-inverse", inst.optimizer.seed, results={"s": s, "left_inverse": v})


def _cmd_dual(inst: InstanceFile) -> RunReport:
    shock = _need(inst.shock, "shock", "dual")
    rep = de.dual_risk(inst.risk_measure, inst.aggregator, shock, inst.optimizer)
    check = CheckSummary("gap within tolerance", rep.gap_ok, f"gap {rep.gap:.3g}")
    return RunReport(
        "dual",
        inst.optimizer.seed,
        primal=rep.primal,
        dual_bound=rep.dual_bound,
        gap=rep.gap,
        best=_dual_dict(rep.best),
        results={"starts_used": rep.starts_used, "iterations": rep.iterations},
        checks=(check,),
    )


def _probe_checks(inst: InstanceFile) -> list[CheckSummary]:
    n = inst.shock.n if inst.shock is not None else (inst.xstar.n if inst.xstar is not None else None)
    probe = de.quasiconvexity_probe(
        inst.risk_measure, inst.aggregator, inst.space, n=n, trials=inst.verify.trials, seed=inst.optimizer.seed, box=inst.verify.box
    )
    return [
        CheckSummary("quasiconvex along mixtures", probe.mixture_violations == 0, f"{probe.mixture_violations} of {probe.trials} violated"),
        CheckSummary("decreasing under nonnegative increments", probe.monotone_violations == 0, f"{probe.monotone_violations} of {probe.trials} violated"),
        CheckSummary("aggregate scalarisations quasiconcave", probe.scalarization_violations == 0, f"{probe.scalarization_violations} of {probe.trials} violated"),
    ]


def _minimax_check(inst: InstanceFile) -> tuple[CheckSummary, dict] | None:
    if inst.xstar is None or inst.m is None:
        return None
    v = inst.verify
    probe = de.verify_minimax(
        inst.risk_measure, inst.aggregator, inst.xstar, inst.m, box=v.box, x_resolution=v.x_resolution, density_resolution=v.density_resolution
    )
    check = CheckSummary("sup-inf equals inf-sup on the grid", probe.ok, f"difference {probe.difference:.3g}")
    return check, {"minimax_lhs": probe.lhs, "minimax_rhs": probe.rhs}


def _cmd_verify(inst: InstanceFile) -> RunReport:
    checks = _probe_checks(inst)
    results: dict[str, Any] = {}
    mm = _minimax_check(inst)
    if mm is not None:
        checks.append(mm[0])
        results.update(mm[1])
    return RunReport("verify", inst.optimizer.seed, results=results, checks=tuple(checks))


def _cmd_selftest(inst: InstanceFile) -> RunReport:
    checks = _probe_checks(inst)
    results: dict[str, Any] = {}
    mm = _minimax_check(inst)
    if mm is not None:
        checks.append(mm[0])
        results.update(mm[1])
    rng = np.random.default_rng(np.random.SeedSequence(inst.optimizer.seed).spawn(1)[0])
    if inst.shock is not None:
        primal = de.primal_risk(inst.risk_measure, inst.aggregator, inst.shock)
        worst = -np.inf
        for _ in range(inst.verify.weak_duality_samples):
            dv = de.random_dual_variables(inst.space, inst.shock.n, rng)
            worst = max(worst, de.dual_objective(inst.risk_measure, inst.aggregator, inst.shock, dv))
        ok = bool(worst <= primal + de.WEAK_DUALITY_TOL)
        checks.append(CheckSummary("weak duality on random candidates", ok, f"best sample {worst:.6g} vs primal {primal:.6g}"))
        results["primal"] = primal
        rep = de.dual_risk(inst.risk_measure, inst.aggregator, inst.shock, inst.optimizer)
        checks.append(CheckSummary("dual gap within tolerance", rep.gap_ok, f"gap {rep.gap:.3g}"))
        results["dual_bound"] = rep.dual_bound
        net = inst.aggregator.network
        if net is not None:
            diffs = [
                abs(agg_mod.clearing_fixed_point(net, r).lambda_value - agg_mod.clearing_lp(net, r).lambda_value)
                for r in inst.shock.values
            ]
            checks.append(CheckSummary("fixed point and LP agree", max(diffs) <= 1e-8, f"max difference {max(diffs):.3g}"))
    if inst.xstar is not None and inst.s is not None:
        rho, agg, xs, s = inst.risk_measure, inst.aggregator, inst.xstar, inst.s
        direct = de.composition_left_inverse(rho, agg, xs, s, inst.optimizer)
        try:
            bisected = left_inverse_bisect(
                lambda m: de.composition_penalty(rho, agg, xs, m, inst.optimizer, check_hypothesis=False), s, tol=1e-8
            )
        except ComputationError as exc:
            checks.append(CheckSummary("left inverse matches bisection", False, str(exc)))
        else:
            if math.isinf(direct) or math.isinf(bisected):
                ok = direct == bisected
            else:
                ok = abs(direct - bisected) <= 1e-5
            checks.append(CheckSummary("left inverse matches bisection", ok, f"{direct:.9g} vs {bisected:.9g}"))
            results["left_inverse"] = direct
    return RunReport("selftest", inst.optimizer.seed, results=results, checks=tuple(checks))


_DISPATCH = {
    "clear": _cmd_clear,
    "evaluate": _cmd_evaluate,
    "penalty": _cmd_penalty,
    "left-inverse": _cmd_left_inverse,
    "dual": _cmd_dual,
    "verify": _cmd_verify,
    "selftest": _cmd_selftest,
}


def run_command(cmd: str, instance: InstanceFile) -> RunReport:
    """Run one command and time it."""
    if cmd not in _DISPATCH:
        raise ValidationError(f"unknown command {cmd!r} (known: {list(COMMANDS)})")
    start = time.perf_counter()
    try:
        report = _DISPATCH[cmd](instance)
    except QRiskError as exc:
        raise type(exc)(f"{cmd}: {exc}") if not isinstance(exc, InstanceError) else exc
    return replace(report, wall_time=time.perf_counter() - start)


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qrisk", description="Systemic risk measures and their dual representations.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--instance", required=True, help="instance file (JSON)")
    p.add_argument("--format", choices=FORMATS, default="structured")
    p.add_argument("--seed", type=int, default=None, help="overrides optimizer.seed")
    p.add_argument("--out", default=None, help="write the report here instead of stdout")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        inst = parse_instance(args.instance)
        if args.seed is not None:
            inst = replace(inst, optimizer=replace(inst.optimizer, seed=args.seed))
        report = run_command(args.command, inst)
    except InstanceError as exc:
        print(f"error [{exc.code}] {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ValidationError as exc:
        print(f"error [invalid] {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ComputationError as exc:
        print(f"error [computation] {exc}", file=sys.stderr)
        return EXIT_COMPUTATION
    data = emit_report(report, args.format)
    if args.out:
        Path(args.out).write_bytes(data)
    else:
        sys.stdout.buffer.write(data)
        sys.stdout.flush()
    if args.command in ("verify", "selftest") and not report.checks_ok:
        return EXIT_PROPERTY
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
