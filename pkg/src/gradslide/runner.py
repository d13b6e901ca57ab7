"""Configuration, deterministic cost accounting and the command-line entry point.

Every command writes into one output directory:

* ``trace.csv``: one row per outer iteration with cumulative counters and
  the synthetic cost ``cost_grad_f * n_grad_f + cost_grad_h * n_grad_h +
  cost_K * (n_apply_K + n_apply_Kt)``;
* ``summary.json``: final objective, counters and the schedule constants;
* ``timing.json``: wall-clock time, kept apart so the other two files are
  byte-identical across reruns.

Generator commands write ``instance.json`` and ``summary.json`` instead.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import instances as inst_mod
from .errors import BudgetTooSmall, ConfigError, DimensionError, GradSlideError, IoError, SolverError
from .multistage import estimate_delta0, mags_dynamic_smoothing, mags_run, plan_mags
from .oracles import COUNTER_FIELDS, OracleCounters
from .saddle import psi, solve_spp, subgradient
from .sliding import RunTrace, ags_run, nest_run, schedule_cor1, schedule_cor2

__all__ = [
    "CONFIG_SCHEMA",
    "COMMANDS",
    "SOLVERS",
    "CostModel",
    "RunConfig",
    "RaceEntry",
    "RaceResult",
    "load_config",
    "resolve_instance",
    "race",
    "run",
    "trace_csv",
    "main",
]

CONFIG_SCHEMA = "gradslide.config/1"
SUMMARY_SCHEMA = "gradslide.summary/1"
COMMANDS = ("gen-portfolio", "gen-tv", "solve-smooth", "solve-spp", "solve-mags", "solve-dyn", "race")
SOLVERS = ("ags-cor1", "ags-cor2", "nest")
CSV_HEADER = ("k",) + COUNTER_FIELDS + ("cost",)
DEFAULT_RACE_NEST_ITERS = 300

_DEFAULT_KIND = {
    "gen-portfolio": "portfolio",
    "gen-tv": "tv",
    "solve-smooth": "quadratic",
    "solve-spp": "tv",
    "solve-mags": "quadratic",
    "solve-dyn": "tv",
    "race": "portfolio",
}
_GENERATORS = {
    "portfolio": inst_mod.gen_portfolio,
    "tv": inst_mod.gen_tv,
    "quadratic": inst_mod.gen_quadratic,
}


@dataclass(frozen=True)
class CostModel:
    """Synthetic price of one oracle call; ``cost_K`` is charged per ``K`` or ``K'``."""

    cost_grad_f: float = 1.0
    cost_grad_h: float = 1.0
    cost_K: float = 0.0

    def __post_init__(self):
        vals = (self.cost_grad_f, self.cost_grad_h, self.cost_K)
        if any(not (math.isfinite(v) and v >= 0) for v in vals):
            raise ConfigError("costs must be finite and nonnegative")

    @classmethod
    def for_instance(cls, instance, overrides=None):
        base = dict(instance.costs())
        base.update({k: float(v) for k, v in (overrides or {}).items()})
        unknown = set(base) - {"cost_grad_f", "cost_grad_h", "cost_K"}
        if unknown:
            raise ConfigError(f"unknown cost fields {sorted(unknown)}")
        return cls(**base)

    def of(self, counts: dict) -> float:
        return (self.cost_grad_f * counts["n_grad_f"] + self.cost_grad_h * counts["n_grad_h"]
                + self.cost_K * (counts["n_apply_K"] + counts["n_apply_Kt"]))


@dataclass
class RunConfig:
    """One command invocation.

    ``instance`` is a path to an instance JSON; without it ``generator``
    supplies keyword arguments for the matching ``gen_*`` function (its
    ``kind`` entry picks the family).  ``costs`` overrides the per-instance
    default cost model field by field.
    """

    command: str
    instance: str | None = None
    generator: dict = field(default_factory=dict)
    solver: str = "ags-cor2"
    N: int | None = None
    eps: float | None = None
    radius_sq: float | None = None
    delta0: float | None = None
    budget: float | None = None
    solvers: list = field(default_factory=lambda: ["nest", "ags-cor2"])
    costs: dict = field(default_factory=dict)
    out: str = "."
    seed: int = 0
    trace_objective: bool = False
    schema: str = CONFIG_SCHEMA

    def __post_init__(self):
        if self.schema != CONFIG_SCHEMA:
            raise ConfigError(f"unsupported config schema {self.schema!r}")
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}; choose from {', '.join(COMMANDS)}")
        for name in [self.solver, *self.solvers]:
            if name not in SOLVERS:
                raise ConfigError(f"unknown solver {name!r}")
        if self.N is not None and (int(self.N) != self.N or self.N < 1):
            raise ConfigError("N must be a positive integer")
        for key in ("eps", "radius_sq", "delta0", "budget"):
            val = getattr(self, key)
            if val is not None and not (isinstance(val, (int, float)) and val > 0):
                raise ConfigError(f"{key} must be positive")
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if not isinstance(self.generator, dict) or not isinstance(self.costs, dict):
            raise ConfigError("generator and costs must be JSON objects")
        if self.command == "race" and len(self.solvers) != 2:
            raise ConfigError("race takes exactly two solvers")


def load_config(path, **overrides) -> RunConfig:
    """Read a JSON config; non-``None`` keyword overrides win over file values."""
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise IoError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    data.update({k: v for k, v in overrides.items() if v is not None})
    return _config_from_dict(data)


def _config_from_dict(data) -> RunConfig:
    names = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown config fields {sorted(unknown)}")
    if "command" not in data:
        raise ConfigError("config lacks a command")
    try:
        return RunConfig(**data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def resolve_instance(config: RunConfig):
    """Load the instance file or generate one from ``config.generator``."""
    if config.instance:
        try:
            return inst_mod.load_instance(config.instance)
        except OSError as exc:
            raise IoError(f"cannot read instance {config.instance}: {exc}") from exc
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"bad instance file {config.instance}: {exc}") from exc
    params = dict(config.generator)
    kind = params.pop("kind", _DEFAULT_KIND[config.command])
    if kind not in _GENERATORS:
        raise ConfigError(f"unknown instance kind {kind!r}")
    params.setdefault("seed", config.seed)
    try:
        return _GENERATORS[kind](**params)
    except (TypeError, DimensionError) as exc:
        raise ConfigError(f"bad generator parameters for {kind}: {exc}") from exc


# -- output helpers ----------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "%.17g" % v


def trace_csv(trace: RunTrace, costs: CostModel, with_objective=False) -> str:
    """Trace rows as CSV text (LF endings, floats with 17 significant digits)."""
    header = CSV_HEADER + (("objective",) if with_objective else ())
    lines = [",".join(header)]
    for r in trace.rows:
        counts = {c: getattr(r, c) for c in COUNTER_FIELDS}
        vals = [r.k, *counts.values(), costs.of(counts)]
        if with_objective:
            vals.append(float("nan") if r.objective is None else r.objective)
        lines.append(",".join(_fmt(v) for v in vals))
    return "\n".join(lines) + "\n"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def _dumps(obj) -> str:
    return json.dumps(_jsonable(obj), indent=1, sort_keys=True, allow_nan=False) + "\n"


def _write(path, text):
    tmp = f"{path}.tmp"
    try:
        with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def _instance_info(instance) -> dict:
    d = inst_mod.instance_to_dict(instance)
    return {"kind": d["kind"], **d["params"]}


def _public_meta(meta) -> dict:
    hidden = {"stage_points", "x_history", "xbar_history"}
    return {k: v for k, v in meta.items() if k not in hidden}


# -- solvers on composite instances ------------------------------------------------


def _composite(instance):
    if not hasattr(instance, "h_oracle"):
        raise ConfigError(f"{instance.kind} instances are not composite smooth problems")
    return instance.f_oracle(), instance.h_oracle()


def _schedule(name, L, M, nu):
    return schedule_cor1(L, M, nu) if name == "ags-cor1" else schedule_cor2(L, M, nu)


def _solve_composite(name, instance, N, counters=None, trace_objective=False):
    f, h = _composite(instance)
    geom, fset, x0 = instance.geometry, instance.feasible_set(), instance.x0()
    if name == "nest":
        return nest_run(f, h, geom, fset, x0, N, counters=counters,
                        trace_objective=trace_objective)
    sched = _schedule(name, f.lipschitz, h.lipschitz, geom.modulus)
    return ags_run(f, h, geom, fset, x0, N, sched, counters=counters,
                   trace_objective=trace_objective)


def _affordable_iterations(name, instance, costs: CostModel, budget) -> tuple[int, float]:
    """Largest ``N`` whose cumulative cost stays within ``budget``, and that cost."""
    f, h = _composite(instance)
    slack = budget * (1.0 + 1e-12)
    if name == "nest":
        per = costs.cost_grad_f + costs.cost_grad_h
        if per <= 0:
            raise ConfigError("nest iterations are free under this cost model")
        N = int(math.floor(slack / per))
        return N, N * per
    sched = _schedule(name, f.lipschitz, h.lipschitz, instance.geometry.modulus)
    first = costs.cost_grad_f + sched.T(1) * costs.cost_grad_h
    later = costs.cost_grad_f + sched.T(2) * costs.cost_grad_h
    if first > slack:
        return 0, 0.0
    if later <= 0:
        raise ConfigError(f"{name} iterations are free under this cost model")
    N = 1 + int(math.floor((slack - first) / later))
    return N, first + (N - 1) * later


@dataclass
class RaceEntry:
    solver: str
    N: int
    objective: float
    counters: dict
    cost: float
    utilization: float
    trace: RunTrace = field(repr=False, default=None)


@dataclass
class RaceResult:
    """Two solvers under one synthetic budget; ``ratio = phi[0] / phi[1]``."""

    budget: float
    costs: CostModel
    entries: list
    ratio: float

    @property
    def within_one_percent(self) -> bool:
        return all(e.utilization >= 0.99 for e in self.entries)

    def summary(self) -> dict:
        return {
            "budget": self.budget,
            "costs": dataclasses.asdict(self.costs),
            "ratio": self.ratio,
            "within_one_percent": self.within_one_percent,
            "solvers": [
                {"solver": e.solver, "N": e.N, "objective": e.objective, "counters": e.counters,
                 "cost": e.cost, "utilization": e.utilization}
                for e in self.entries
            ],
        }


def race(instance, solvers=("nest", "ags-cor2"), budget=None, costs: CostModel | None = None,
         trace_objective=False) -> RaceResult:
    """Give each solver the same synthetic budget and compare final objectives.

    A solver runs the largest number of outer iterations whose cost fits the
    budget (the schedules do not depend on the horizon, so this equals
    stopping before the first unaffordable step).  The default budget buys
    300 iterations of the single-loop method.  Objectives are evaluated
    once, afterwards, and are not charged.
    """
    if len(solvers) != 2:
        raise ConfigError("race takes exactly two solvers")
    costs = CostModel.for_instance(instance) if costs is None else costs
    if budget is None:
        budget = DEFAULT_RACE_NEST_ITERS * (costs.cost_grad_f + costs.cost_grad_h)
    if not budget > 0:
        raise ConfigError("budget must be positive")
    entries = []
    for name in solvers:
        N, spent = _affordable_iterations(name, instance, costs, budget)
        if N < 1:
            raise BudgetTooSmall(f"budget {budget:g} does not cover one {name} iteration")
        x, trace = _solve_composite(name, instance, N, OracleCounters(), trace_objective)
        counts = trace.counters.snapshot()
        entries.append(RaceEntry(name, N, instance.objective(x), counts, costs.of(counts),
                                 costs.of(counts) / budget, trace))
    ratio = entries[0].objective / entries[1].objective
    return RaceResult(float(budget), costs, entries, ratio)


# -- command dispatch --------------------------------------------------------------


def _gen(config, instance, out):
    _write(os.path.join(out, "instance.json"), _dumps(inst_mod.instance_to_dict(instance)))
    info = _instance_info(instance)
    if instance.kind == "tv":
        info["K_norm"] = instance.K.norm
        info["m"] = instance.m
    return {"instance": info}


def _solve_smooth(config, instance):
    N = config.N or 100
    name = config.solver
    x, trace = _solve_composite(name, instance, N, trace_objective=config.trace_objective)
    return x, trace, {"solver": name, "final_objective": instance.objective(x)}


def _solve_spp(config, instance):
    if instance.kind != "tv":
        raise ConfigError("solve-spp needs a tv instance")
    eps = config.eps or 1e-2
    radius_sq = config.radius_sq or instance.n / 2.0
    obj = True if config.trace_objective else False
    x, trace = solve_spp(instance.saddle(), instance.x0(), eps, instance.geometry,
                         instance.feasible_set(), radius_sq, trace_objective=obj)
    return x, trace, {"solver": "ags-cor2", "final_objective": instance.objective(x)}


def _solve_mags(config, instance):
    f, h = _composite(instance)
    mu = f.mu + h.mu
    if not mu > 0:
        raise ConfigError("solve-mags needs a strongly convex instance (mu > 0)")
    eps = config.eps or 1e-6
    fset, x0 = instance.feasible_set(), instance.x0()
    delta0 = config.delta0
    if delta0 is None:
        delta0 = estimate_delta0(instance.objective, lambda v: f.grad(v) + h.grad(v), mu, fset, x0)
    plan = plan_mags(f.lipschitz, mu, instance.geometry.modulus, delta0, eps)
    x, trace = mags_run(f, h, instance.geometry, fset, x0, plan,
                        trace_objective=config.trace_objective)
    return x, trace, {"solver": "mags", "final_objective": instance.objective(x),
                      "delta0": delta0, "eps": eps}


def _solve_dyn(config, instance):
    if instance.kind != "tv":
        raise ConfigError("solve-dyn needs a tv instance")
    sp = instance.saddle()
    if not sp.f.mu > 0:
        raise ConfigError("solve-dyn needs mu > 0 in the tv generator")
    eps = config.eps or 1e-3
    x0, fset = instance.x0(), instance.feasible_set()
    delta0 = config.delta0
    if delta0 is None:
        delta0 = estimate_delta0(lambda v: psi(sp, v), lambda v: subgradient(sp, v),
                                 sp.f.mu, fset, x0)
    obj = True if config.trace_objective else False
    x, trace = mags_dynamic_smoothing(sp, x0, delta0, eps, instance.geometry, fset,
                                      trace_objective=obj)
    return x, trace, {"solver": "mags-dyn", "final_objective": instance.objective(x),
                      "delta0": delta0, "eps": eps}


_SOLVE = {
    "solve-smooth": _solve_smooth,
    "solve-spp": _solve_spp,
    "solve-mags": _solve_mags,
    "solve-dyn": _solve_dyn,
}


def run(config: RunConfig) -> dict:
    """Execute one command and write its artifacts into ``config.out``.

    Returns the summary that was written to ``summary.json``.
    """
    out = config.out
    try:
        os.makedirs(out, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create output directory {out}: {exc}") from exc
    start = time.perf_counter()
    instance = resolve_instance(config)
    summary = {"schema": SUMMARY_SCHEMA, "command": config.command}
    try:
        if config.command in ("gen-portfolio", "gen-tv"):
            summary.update(_gen(config, instance, out))
        elif config.command == "race":
            costs = CostModel.for_instance(instance, config.costs)
            result = race(instance, tuple(config.solvers), config.budget, costs,
                          config.trace_objective)
            for i, e in enumerate(result.entries):
                _write(os.path.join(out, f"trace_{i}_{e.solver}.csv"),
                       trace_csv(e.trace, costs, config.trace_objective))
            summary.update(instance=_instance_info(instance), race=result.summary())
        else:
            costs = CostModel.for_instance(instance, config.costs)
            x, trace, extra = _SOLVE[config.command](config, instance)
            _write(os.path.join(out, "trace.csv"), trace_csv(trace, costs, config.trace_objective))
            counts = trace.counters.snapshot()
            summary.update(extra)
            summary.update(
                instance=_instance_info(instance),
                iterations=len(trace),
                counters=counts,
                diagnostic_evaluations=dict(sorted(trace.counters.diagnostic.items())),
                cost=costs.of(counts),
                costs=dataclasses.asdict(costs),
                constants=_public_meta(trace.meta),
            )
    except (ConfigError, IoError):
        raise
    except (GradSlideError, ArithmeticError, ValueError) as exc:
        raise SolverError(f"{config.command} failed: {exc}") from exc
    _write(os.path.join(out, "summary.json"), _dumps(summary))
    _write(os.path.join(out, "timing.json"),
           _dumps({"command": config.command, "wall_seconds": time.perf_counter() - start}))
    return summary


# -- CLI ---------------------------------------------------------------------------


def _bool(text):
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


_GEN_FLAGS = {
    "n": int, "m": int, "ratio": float, "rows": int, "cols": int,
    "eta": float, "sigma2": float, "mu": float, "kind": str, "L": float, "M": float,
}


def _parser():
    p = argparse.ArgumentParser(
        prog="gradslide",
        description="Generate test problems and run gradient-sliding solvers with oracle accounting.",
    )
    sub = p.add_subparsers(dest="command", metavar="COMMAND")
    for cmd in COMMANDS:
        s = sub.add_parser(cmd)
        s.add_argument("--config", help="JSON config file; flags given here override it")
        s.add_argument("--out", help="output directory (default: current directory)")
        s.add_argument("--seed", type=int)
        s.add_argument("--trace-objective", type=_bool, metavar="BOOL")
        s.add_argument("--instance", help="instance JSON written by a gen-* command")
        s.add_argument("--solver", choices=SOLVERS)
        s.add_argument("--N", type=int, dest="N")
        s.add_argument("--eps", type=float)
        s.add_argument("--radius-sq", type=float, dest="radius_sq")
        s.add_argument("--delta0", type=float)
        s.add_argument("--budget", type=float)
        s.add_argument("--solvers", nargs=2, choices=SOLVERS)
        s.add_argument("--cost-grad-f", type=float, dest="cost_grad_f")
        s.add_argument("--cost-grad-h", type=float, dest="cost_grad_h")
        s.add_argument("--cost-K", type=float, dest="cost_K")
        g = s.add_argument_group("generator parameters")
        for name, typ in _GEN_FLAGS.items():
            g.add_argument(f"--{name}", type=typ, dest=f"gen_{name}")
    return p


def config_from_args(ns) -> RunConfig:
    gen = {k[4:]: v for k, v in vars(ns).items() if k.startswith("gen_") and v is not None}
    costs = {k: getattr(ns, k) for k in ("cost_grad_f", "cost_grad_h", "cost_K")
             if getattr(ns, k) is not None}
    plain = {k: getattr(ns, k) for k in ("out", "seed", "trace_objective", "instance", "solver",
                                         "N", "eps", "radius_sq", "delta0", "budget")}
    if ns.solvers is not None:
        plain["solvers"] = list(ns.solvers)
    plain = {k: v for k, v in plain.items() if v is not None}
    if ns.config:
        try:
            with open(ns.config, encoding="utf-8") as fh:
                data = json.load(fh)
        except OSError as exc:
            raise IoError(f"cannot read config {ns.config}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {ns.config} is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        if data.get("command", ns.command) != ns.command:
            raise ConfigError(f"config is for {data['command']!r}, not {ns.command!r}")
    else:
        data = {}
    data["command"] = ns.command
    data.update(plain)
    if gen:
        data["generator"] = {**data.get("generator", {}), **gen}
    if costs:
        data["costs"] = {**data.get("costs", {}), **costs}
    return _config_from_dict(data)


EXIT_CODES = ((ConfigError, 2), (IoError, 4), (SolverError, 3))


def main(argv=None) -> int:
    parser = _parser()
    ns = parser.parse_args(argv)
    if ns.command is None:
        parser.print_help(sys.stderr)
        return 2
    try:
        run(config_from_args(ns))
    except GradSlideError as exc:
        for cls, code in EXIT_CODES:
            if isinstance(exc, cls):
                print(f"gradslide: {exc}", file=sys.stderr)
                return code
        print(f"gradslide: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"gradslide: {exc}", file=sys.stderr)
        return 4
    return 0
