"""Restarted sliding for strongly convex problems.

Each stage runs a fixed number ``N0`` of AGS iterations warm-started at the
previous output.  ``N0`` is chosen so that one stage halves the optimality
gap, which turns the ``O(1/k^2)`` rate into linear convergence.  The
saddle-point variant additionally shrinks the smoothing weight by ``sqrt 2``
per stage, so the smoothing error tracks the halving gap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bregman import EUCLIDEAN, FeasibleSet, Geometry
from .errors import GeometryNotQuadraticGrowth, InvalidConstants, RegimeViolated
from .oracles import OracleCounters, SmoothOracle, counted
from .saddle import SaddleInstance, SmoothedObjective, psi
from .sliding import RunTrace, ags_run, ceil_int, schedule_cor2

__all__ = [
    "StagePlan",
    "plan_mags",
    "plan_dynamic",
    "mags_run",
    "mags_dynamic_smoothing",
    "estimate_delta0",
]


@dataclass(frozen=True)
class StagePlan:
    """Stage budget for a restarted run.

    ``rhos[s - 1]`` is the smoothing weight of stage ``s`` (empty for plain
    M-AGS).
    """

    N0: int
    S: int
    delta0: float
    eps: float
    rho0: float | None = None
    rhos: tuple = ()

    def __post_init__(self):
        if self.N0 < 1 or self.S < 0 or not self.delta0 > 0:
            raise InvalidConstants("need N0 >= 1, S >= 0 and delta0 > 0")
        if self.rho0 is not None and not self.rho0 > 0:
            raise InvalidConstants("rho0 must be positive")


def _stage_budget(L, mu, nu):
    if not (L >= mu > 0 and nu > 0):
        raise InvalidConstants(f"need L >= mu > 0 and nu > 0 (L={L}, mu={mu}, nu={nu})")
    return ceil_int(3.0 * math.sqrt(2.0 * L / (nu * mu)))


def _stage_count(ratio):
    return ceil_int(math.log2(max(ratio, 1.0)))


def plan_mags(L, mu, nu, delta0, eps) -> StagePlan:
    """``N0 = ceil(3 sqrt(2L / (nu mu)))`` and ``S = ceil(log2 max(delta0/eps, 1))``."""
    if not (delta0 > 0 and eps > 0):
        raise InvalidConstants("delta0 and eps must be positive")
    return StagePlan(_stage_budget(L, mu, nu), _stage_count(delta0 / eps), float(delta0), float(eps))


def plan_dynamic(L, mu, nu, delta0, eps, Omega) -> StagePlan:
    """Stage plan with smoothing weights ``rho_s = 2^(-s/2) rho0``.

    ``S = ceil(log2 max(15 delta0 / eps, 1))`` and
    ``rho0 = 4 delta0 / (Omega 2^(S/2))``.
    """
    if not (delta0 > 0 and eps > 0 and Omega > 0):
        raise InvalidConstants("delta0, eps and Omega must be positive")
    N0 = _stage_budget(L, mu, nu)
    S = _stage_count(15.0 * delta0 / eps)
    rho0 = 4.0 * delta0 / (Omega * 2.0 ** (S / 2.0))
    rhos = tuple(rho0 * 2.0 ** (-s / 2.0) for s in range(1, S + 1))
    return StagePlan(N0, S, float(delta0), float(eps), rho0, rhos)


def _require_growth(geometry: Geometry):
    if not geometry.quadratic_growth:
        raise GeometryNotQuadraticGrowth(
            f"{geometry.kind} prox-function does not grow quadratically; restarts need euclidean"
        )


def _renumber(trace: RunTrace, offset: int):
    for row in trace.rows:
        row.k += offset


def mags_run(f: SmoothOracle, h: SmoothOracle, geometry: Geometry = EUCLIDEAN,
             fset: FeasibleSet | None = None, v0=None, plan: StagePlan | None = None, *,
             counters: OracleCounters | None = None, trace_objective=False):
    """Run ``plan.S`` warm-started AGS stages of ``plan.N0`` steps each.

    ``f`` must carry its strong-convexity modulus; the stage budget is read
    from ``plan``.  Returns ``(v_S, trace)``; ``trace.meta["stage_points"]``
    lists ``v_0 .. v_S``.  Counts add up to ``S * N0`` gradients of ``f`` and
    ``S * (T_1 + (N0 - 1) T_k)`` gradients of ``h``.
    """
    _require_growth(geometry)
    if plan is None:
        raise InvalidConstants("a StagePlan is required")
    v = np.asarray(v0, dtype=float).copy()
    if fset is None:
        fset = FeasibleSet.whole_space(v.size)
    fset.check(v, "v0")
    counters = OracleCounters() if counters is None else counters
    fc, hc = counted(f, counters, "f"), counted(h, counters, "h")
    nu = geometry.modulus
    sched = schedule_cor2(f.lipschitz, max(h.lipschitz, f.lipschitz), nu)
    trace = RunTrace(counters=counters,
                     meta={"solver": "mags", **sched.constants(), "N0": plan.N0, "S": plan.S,
                           "delta0": plan.delta0, "stage_points": [v.copy()]})
    for s in range(1, plan.S + 1):
        v, part = ags_run(fc, hc, geometry, fset, v, plan.N0, sched, counters=counters,
                          trace_objective=trace_objective, stage=s, wrap=False,
                          validate=(s == 1))
        _renumber(part, (s - 1) * plan.N0)
        trace.extend(part)
        trace.meta["stage_points"].append(v.copy())
    return v, trace


def _dynamic_regime(inst: SaddleInstance, delta0, eps):
    lhs = inst.Omega * inst.K.norm**2 * max(math.sqrt(15.0 * delta0 / eps), 1.0)
    rhs = 2.0 * inst.omega * delta0 * inst.f.lipschitz
    return lhs, rhs


def mags_dynamic_smoothing(inst: SaddleInstance, v0, delta0, eps,
                           geometry: Geometry = EUCLIDEAN, fset: FeasibleSet | None = None,
                           *, counters: OracleCounters | None = None, trace_objective=False):
    """Restarted AGS on a strongly convex saddle problem with shrinking smoothing.

    Stage ``s`` rebuilds ``h_rho`` at ``rho_s = 2^(-s/2) rho0`` (so its
    constant grows by ``sqrt 2`` per stage) and re-derives the schedule.  When
    ``delta0`` bounds ``psi(v0) - psi*`` the output is an ``eps``-solution;
    more precisely ``2^S (psi(v_S) - psi*) <= 15 delta0``.

    ``trace_objective=True`` logs the exact nonsmooth ``psi``.
    """
    _require_growth(geometry)
    f = inst.f
    if not f.mu > 0:
        raise InvalidConstants("dynamic smoothing needs a strongly convex f (mu > 0)")
    lhs, rhs = _dynamic_regime(inst, delta0, eps)
    if lhs < rhs:
        raise RegimeViolated(
            f"Omega ||K||^2 max(sqrt(15 delta0/eps), 1) = {lhs:.4g} < 2 omega delta0 L = {rhs:.4g}"
        )
    nu = geometry.modulus
    plan = plan_dynamic(f.lipschitz, f.mu, nu, delta0, eps, inst.Omega)
    v = np.asarray(v0, dtype=float).copy()
    if fset is None:
        fset = FeasibleSet.whole_space(v.size)
    fset.check(v, "v0")
    counters = OracleCounters() if counters is None else counters
    fc = counted(f, counters, "f")
    obj = (lambda x: psi(inst, x)) if trace_objective is True else trace_objective
    L = f.lipschitz
    trace = RunTrace(counters=counters,
                     meta={"solver": "mags-dyn", "N0": plan.N0, "S": plan.S, "delta0": delta0,
                           "eps": eps, "rho0": plan.rho0, "rhos": list(plan.rhos),
                           "Omega": inst.Omega, "stage_points": [v.copy()], "stage_M": [],
                           "stage_T": []})
    for s, rho in enumerate(plan.rhos, start=1):
        sm = SmoothedObjective(inst, rho, counters)
        M = max(sm.M, L)
        hc = counted(sm.oracle(M), counters, "h")
        sched = schedule_cor2(L, M, nu)
        v, part = ags_run(fc, hc, geometry, fset, v, plan.N0, sched, counters=counters,
                          trace_objective=obj, stage=s, wrap=False)
        _renumber(part, (s - 1) * plan.N0)
        trace.extend(part)
        trace.meta["stage_points"].append(v.copy())
        trace.meta["stage_M"].append(sm.M)
        trace.meta["stage_T"].append([sched.T(1), sched.T(2)])
    return v, trace


def estimate_delta0(value, subgrad, mu, fset: FeasibleSet, v0) -> float:
    """Heuristic initial-gap bound from one strongly convex lower model.

    Strong convexity gives ``phi(u) >= phi(v0) + <g, u - v0> + mu/2 ||u - v0||^2``;
    the minimum of the right side over the set (a projected step) is a lower
    bound on ``phi*``.  Its gap to ``phi(v0)`` is returned.  Tight only when
    ``mu`` is accurate; never relied upon by the certified tests.
    """
    if not mu > 0:
        raise InvalidConstants("mu must be positive")
    v0 = np.asarray(v0, dtype=float)
    g = np.asarray(subgrad(v0), dtype=float)
    u = fset.project(v0 - g / mu)
    d = u - v0
    model = float(g @ d) + 0.5 * mu * float(d @ d)
    return max(-model, np.finfo(float).tiny)
