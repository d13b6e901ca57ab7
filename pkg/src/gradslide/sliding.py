"""Accelerated gradient sliding for ``min_{x in X} f(x) + h(x)``.

The outer loop linearizes the cheap-to-skip component ``f`` once per
iteration; the inner ``prox_ag`` loop runs ``T_k`` accelerated steps on ``h``
with that linear model frozen.  When ``h`` has a much larger Lipschitz
constant than ``f`` this keeps the number of ``grad f`` calls at
``O(sqrt(L / eps))`` while ``grad h`` is called ``O(sqrt(M / eps))`` times.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .bregman import EUCLIDEAN, FeasibleSet, Geometry, prox_map
from .errors import InvalidConstants, ScheduleInvalid
from .oracles import COUNTER_FIELDS, OracleCounters, SmoothOracle, counted

__all__ = [
    "InnerParams",
    "AgsSchedule",
    "Cor1Schedule",
    "Cor2Schedule",
    "CustomSchedule",
    "Violation",
    "TraceRow",
    "RunTrace",
    "ceil_int",
    "schedule_cor1",
    "schedule_cor2",
    "nesterov_schedule",
    "validate_schedule",
    "prox_ag",
    "ags_run",
    "nest_run",
    "ags_restarted",
]


def ceil_int(x: float) -> int:
    """Ceiling that ignores round-off just above an integer (e.g. 3*sqrt(100))."""
    r = round(x)
    if abs(x - r) <= 1e-12 * max(1.0, abs(x)):
        return int(r)
    return math.ceil(x)


class InnerParams(NamedTuple):
    """Inner-loop parameters for one ProxAG call, indexed by ``t - 1``."""

    alpha: np.ndarray
    p: np.ndarray
    q: np.ndarray
    Lambda: np.ndarray

    @property
    def T(self) -> int:
        return len(self.alpha)


class AgsSchedule:
    """Outer parameters ``gamma, beta, T, lam`` and inner ``alpha, p, q``.

    Subclasses supply closed forms; everything is a pure function of the
    outer index ``k >= 1``.
    """

    name = "schedule"

    def gamma(self, k: int) -> float:
        raise NotImplementedError

    def beta(self, k: int) -> float:
        raise NotImplementedError

    def T(self, k: int) -> int:
        raise NotImplementedError

    def lam(self, k: int) -> float:
        raise NotImplementedError

    def inner(self, k: int) -> InnerParams:
        raise NotImplementedError

    def Gamma(self, k: int) -> float:
        g = 1.0
        for i in range(2, k + 1):
            g *= 1.0 - self.gamma(i)
        return g

    def constants(self) -> dict:
        """Scalars a run summary should echo for later diffing."""
        return {
            "schedule": self.name,
            "gamma_1": self.gamma(1),
            "beta_1": self.beta(1),
            "T_1": self.T(1),
            "T_k": self.T(2),
        }

    def override(self, **fns) -> "CustomSchedule":
        """Copy of this schedule with some parameter functions replaced."""
        return CustomSchedule(base=self, **fns)


class Cor1Schedule(AgsSchedule):
    """Constant inner length ``T = ceil(sqrt(M / L))``; rate ``30 L V / (nu k (k+1))``."""

    name = "ags-cor1"

    def __init__(self, L, M, nu=1.0):
        _check_constants(L, M, nu)
        self.L, self.M, self.nu = float(L), float(M), float(nu)
        self._T = ceil_int(math.sqrt(self.M / self.L))

    def gamma(self, k):
        return 2.0 / (k + 1)

    def T(self, k):
        return self._T

    def lam(self, k):
        if k == 1:
            return 1.0
        T = self._T
        return self.gamma(k) * (T + 1) * (T + 2) / (T * (T + 3))

    def beta(self, k):
        return 3.0 * self.L * self.gamma(k) / (self.nu * k * self.lam(k))

    def Gamma(self, k):
        return 2.0 / (k * (k + 1))

    def inner(self, k):
        t = np.arange(1, self._T + 1, dtype=float)
        if k == 1:
            return InnerParams(
                2.0 / (t + 1), (t - 1) / 2.0, 6.0 * self.M / (self.nu * t), 2.0 / (t * (t + 1))
            )
        return InnerParams(
            2.0 / (t + 2),
            t / 2.0,
            6.0 * self.M / (self.nu * k * (t + 1)),
            6.0 / ((t + 1) * (t + 2)),
        )

    def constants(self):
        out = super().constants()
        out.update(L=self.L, M=self.M, nu=self.nu, T=self._T)
        return out


class Cor2Schedule(AgsSchedule):
    """Geometric inner steps for ``k > 1``; rate ``9 L V / (nu k (k+1))``."""

    name = "ags-cor2"

    def __init__(self, L, M, nu=1.0):
        _check_constants(L, M, nu)
        self.L, self.M, self.nu = float(L), float(M), float(nu)
        self.p = math.sqrt(self.M / self.L)
        self.alpha = 1.0 / (self.p + 1.0)
        self._T1 = ceil_int(math.sqrt(8.0 * self.M / (7.0 * self.L)))
        self._Tk = ceil_int(math.log(3.0) / -math.log1p(-self.alpha))
        self._decay = (1.0 - self.alpha) ** self._Tk

    def gamma(self, k):
        return 2.0 / (k + 1)

    def T(self, k):
        return self._T1 if k == 1 else self._Tk

    def lam(self, k):
        if k == 1:
            return 1.0
        return self.gamma(k) / (1.0 - self._decay)

    def beta(self, k):
        if k == 1:
            return self.L / self.nu
        return 9.0 * self.L * self.gamma(k) / (2.0 * self.nu * k * self.lam(k))

    def Gamma(self, k):
        return 2.0 / (k * (k + 1))

    def inner(self, k):
        if k == 1:
            T = self._T1
            t = np.arange(1, T + 1, dtype=float)
            return InnerParams(
                2.0 / (t + 1),
                (t - 1) / 2.0,
                7.0 * self.L * T * (T + 1) / (4.0 * self.nu * t),
                2.0 / (t * (t + 1)),
            )
        T = self._Tk
        t = np.arange(1, T + 1, dtype=float)
        return InnerParams(
            np.full(T, self.alpha),
            np.full(T, self.p),
            np.zeros(T),
            (1.0 - self.alpha) ** (t - 1),
        )

    def constants(self):
        out = super().constants()
        out.update(L=self.L, M=self.M, nu=self.nu, alpha=self.alpha, p=self.p)
        return out


class CustomSchedule(AgsSchedule):
    """Schedule assembled from callables, optionally on top of a ``base``.

    Inner callables take ``(k, t)`` with ``t`` a float array ``1..T``.  When
    any inner function or ``T`` is overridden, ``Lambda`` is rebuilt from its
    defining recursion.
    """

    name = "custom"

    def __init__(self, base=None, gamma=None, beta=None, T=None, lam=None,
                 alpha=None, p=None, q=None, name=None):
        self.base = base
        self._fns = dict(gamma=gamma, beta=beta, T=T, lam=lam)
        self._inner = dict(alpha=alpha, p=p, q=q)
        self._recompute = T is not None or any(v is not None for v in self._inner.values())
        if name is not None:
            self.name = name
        elif base is not None:
            self.name = f"{base.name}*"

    def _get(self, key, k):
        fn = self._fns[key]
        if fn is not None:
            return fn(k)
        if self.base is None:
            raise ValueError(f"custom schedule lacks {key!r}")
        return getattr(self.base, key)(k)

    def gamma(self, k):
        return float(self._get("gamma", k))

    def beta(self, k):
        return float(self._get("beta", k))

    def T(self, k):
        return int(self._get("T", k))

    def lam(self, k):
        return float(self._get("lam", k))

    def inner(self, k):
        if not self._recompute:
            return self.base.inner(k)
        T = self.T(k)
        t = np.arange(1, T + 1, dtype=float)
        base_inner = None
        arrays = {}
        for i, key in enumerate(("alpha", "p", "q")):
            fn = self._inner[key]
            if fn is not None:
                arrays[key] = np.broadcast_to(np.asarray(fn(k, t), dtype=float), (T,)).copy()
            else:
                if base_inner is None:
                    if self.base is None:
                        raise ValueError(f"custom schedule lacks {key!r}")
                    base_inner = self.base.inner(k)
                    if base_inner.T != T:
                        raise ValueError("overriding T requires explicit alpha, p, q")
                arrays[key] = base_inner[i]
        a = arrays["alpha"]
        Lam = np.empty(T)
        Lam[0] = 1.0
        for i in range(1, T):
            Lam[i] = (1.0 - a[i]) * Lam[i - 1]
        return InnerParams(a, arrays["p"], arrays["q"], Lam)


def _check_constants(L, M, nu):
    if not (L > 0 and nu > 0):
        raise InvalidConstants("need L > 0 and nu > 0")
    if M < L:
        raise InvalidConstants(f"sliding schedules assume M >= L (got M={M}, L={L}); swap f and h")


def schedule_cor1(L, M, nu=1.0) -> Cor1Schedule:
    return Cor1Schedule(L, M, nu)


def schedule_cor2(L, M, nu=1.0) -> Cor2Schedule:
    return Cor2Schedule(L, M, nu)


def nesterov_schedule(L, M, nu=1.0) -> CustomSchedule:
    """Parameters under which AGS collapses to a single-loop accelerated method."""
    Ltot = float(L) + float(M)

    def gamma(k):
        return 2.0 / (k + 1)

    return CustomSchedule(
        gamma=gamma,
        beta=lambda k: 2.0 * Ltot / (nu * k),
        T=lambda k: 1,
        lam=gamma,
        alpha=lambda k, t: 1.0,
        p=lambda k, t: 0.0,
        q=lambda k, t: 0.0,
        name="nesterov-variant",
    )


class Violation(NamedTuple):
    k: int
    t: int | None
    condition: str
    lhs: float
    rhs: float

    def __str__(self):
        where = f"k={self.k}" + (f", t={self.t}" if self.t is not None else "")
        return f"{self.condition} at {where}: {self.lhs:.6g} vs {self.rhs:.6g}"


def _close(a, b, rtol):
    return np.abs(a - b) <= rtol * np.maximum(1.0, np.maximum(np.abs(a), np.abs(b)))


def validate_schedule(sched: AgsSchedule, L, M, nu, N, rtol=1e-9) -> list:
    """Check every convergence condition of a schedule for ``k = 1..N``.

    Per outer step: ``0 < gamma <= 1``, ``0 < lam <= 1``, the Lambda recursion,
    ``Lambda_T (1 - alpha_1) = 1 - gamma / lam``, the inner prox weight bound
    ``beta p_t + q_t >= lam M alpha_t / nu``, the two telescoping identities
    linking consecutive inner steps, the terminal identity
    ``alpha_T (1 + p_T) = Lambda_T alpha_1 p_1 + 1 - Lambda_T (1 - alpha_1)``,
    and ``beta >= L gamma / nu`` with ``gamma_1 = 1``.

    Returns the list of :class:`Violation` (empty when all pass).
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    out = []

    def flag(k, t, name, lhs, rhs):
        out.append(Violation(k, None if t is None else int(t), name, float(lhs), float(rhs)))

    for k in range(1, N + 1):
        g, lam, beta, T = sched.gamma(k), sched.lam(k), sched.beta(k), sched.T(k)
        a, p, q, Lam = sched.inner(k)
        if not 0 < g <= 1 + rtol:
            flag(k, None, "gamma in (0,1]", g, 1.0)
        if not 0 < lam <= 1 + rtol:
            flag(k, None, "lambda in (0,1]", lam, 1.0)
        if T < 1 or len(a) != T:
            flag(k, None, "inner length", len(a), T)
            continue
        if k == 1 and not _close(g, 1.0, rtol):
            flag(k, None, "gamma_1 = 1", g, 1.0)
        if beta < L * g / nu * (1 - rtol):
            flag(k, None, "beta >= L gamma / nu", beta, L * g / nu)

        rec = np.empty(T)
        rec[0] = 1.0
        rec[1:] = (1.0 - a[1:]) * Lam[:-1]
        bad = ~_close(Lam, rec, rtol)
        if bad.any():
            i = int(np.argmax(bad))
            flag(k, i + 1, "Lambda recursion", Lam[i], rec[i])

        lhs = Lam[-1] * (1.0 - a[0])
        if not _close(lhs, 1.0 - g / lam, rtol):
            flag(k, T, "Lambda_T (1 - alpha_1) = 1 - gamma / lambda", lhs, 1.0 - g / lam)

        weight = beta * p + q
        need = lam * M * a / nu
        bad = weight < need * (1 - rtol)
        if bad.any():
            i = int(np.argmax(bad))
            flag(k, i + 1, "beta p_t + q_t >= lambda M alpha_t / nu", weight[i], need[i])

        if T > 1:
            r1, r2 = a[:-1] * q[:-1] / Lam[:-1], a[1:] * q[1:] / Lam[1:]
            bad = ~_close(r1, r2, rtol)
            if bad.any():
                i = int(np.argmax(bad))
                flag(k, i + 1, "alpha_t q_t / Lambda_t telescoping", r1[i], r2[i])
            r1, r2 = a[:-1] * (1 + p[:-1]) / Lam[:-1], a[1:] * p[1:] / Lam[1:]
            bad = ~_close(r1, r2, rtol)
            if bad.any():
                i = int(np.argmax(bad))
                flag(k, i + 1, "alpha_t (1 + p_t) / Lambda_t telescoping", r1[i], r2[i])

        lhs = a[-1] * (1 + p[-1])
        rhs = Lam[-1] * a[0] * p[0] + 1 - Lam[-1] * (1 - a[0])
        if not _close(lhs, rhs, rtol):
            flag(k, T, "alpha_T (1 + p_T) terminal identity", lhs, rhs)
    return out


@dataclass
class TraceRow:
    k: int
    stage: int
    n_grad_f: int
    n_grad_h: int
    n_apply_K: int
    n_apply_Kt: int
    step_norm: float
    objective: float | None = None


@dataclass
class RunTrace:
    """Per-outer-iteration log of one solver run (or a chain of stages)."""

    rows: list = field(default_factory=list)
    counters: OracleCounters = field(default_factory=OracleCounters)
    meta: dict = field(default_factory=dict)
    inner: list | None = None

    def __len__(self):
        return len(self.rows)

    def column(self, name):
        return np.array([getattr(r, name) for r in self.rows])

    def objectives(self):
        return np.array([np.nan if r.objective is None else r.objective for r in self.rows])

    def best_so_far(self):
        return np.minimum.accumulate(self.objectives())

    def append(self, k, stage, step_norm, objective=None):
        snap = self.counters.snapshot()
        self.rows.append(TraceRow(k, stage, *(snap[c] for c in COUNTER_FIELDS), step_norm, objective))

    def extend(self, other: "RunTrace"):
        self.rows.extend(other.rows)


def prox_ag(g, xbar, x, lam, beta, gamma, T, inner: InnerParams, h: SmoothOracle,
            geometry: Geometry, fset: FeasibleSet, record=None):
    """Inner accelerated loop on ``h`` with the linear model ``<g, .>`` of ``f`` frozen.

    ``g`` is the gradient vector of the outer linearization.  Runs exactly
    ``T`` steps, each with one ``h.grad`` call and one prox solve anchored
    at the outer prox-center ``x`` (weight ``beta``) and the previous inner
    iterate (weight ``beta p_t + q_t``).  ``gamma`` is accepted so callers
    pass the full outer state; it only enters through the schedule
    conditions.  Returns ``(u_T, u_tilde_T)``.
    """
    if inner.T != T:
        raise ValueError(f"inner parameters have length {inner.T}, expected T={T}")
    a, p, q = inner.alpha, inner.p, inner.q
    base = (1.0 - lam) * xbar
    u_tilde = xbar
    u = x
    for t in range(T):
        at = a[t]
        u_low = base + (lam * (1.0 - at)) * u_tilde + (lam * at) * u
        u = prox_map(geometry, fset, g + h.grad(u_low), x, beta, u, beta * p[t] + q[t])
        u_tilde = (1.0 - at) * u_tilde + at * u
        if record is not None:
            record.append((u.copy(), u_tilde.copy()))
    return u, u_tilde


def _objective(how, f, h, x):
    if callable(how):
        return float(how(x))
    if how:
        return f.value(x) + h.value(x)
    return None


def _prepare(f, h, geometry, fset, x0, counters, wrap):
    x0 = np.asarray(x0, dtype=float)
    if fset is None:
        fset = FeasibleSet.whole_space(x0.size)
    fset.check(x0, "x0")
    counters = OracleCounters() if counters is None else counters
    if wrap:
        f = counted(f, counters, "f")
        h = counted(h, counters, "h")
    return f, h, fset, x0, counters


def ags_run(f: SmoothOracle, h: SmoothOracle, geometry: Geometry = EUCLIDEAN,
            fset: FeasibleSet | None = None, x0=None, N: int = 1,
            sched: AgsSchedule | None = None, *, counters: OracleCounters | None = None,
            trace_objective=False, validate=True, record_inner=False, stage=0,
            wrap=True):
    """Run ``N`` outer AGS iterations from ``x0`` and return ``(xbar_N, trace)``.

    ``f`` is linearized once per outer step (one ``grad f`` call); ``h`` is
    handled by :func:`prox_ag`.  With the default ``cor2`` schedule the output
    satisfies ``phi(xbar_k) - phi(u) <= 9 L V(x0, u) / (nu k (k+1))``.

    Pass a shared ``counters`` to accumulate over several runs.  With
    ``trace_objective=True`` the value ``phi(xbar_k)`` is logged each step
    (tallied as diagnostics only); a callable is used as the logged objective
    instead.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    f, h, fset, x0, counters = _prepare(f, h, geometry, fset, x0, counters, wrap)
    if sched is None:
        sched = schedule_cor2(f.lipschitz, h.lipschitz, geometry.modulus)
    if validate:
        bad = validate_schedule(sched, f.lipschitz, h.lipschitz, geometry.modulus, N)
        if bad:
            raise ScheduleInvalid(bad)

    trace = RunTrace(counters=counters, meta={"solver": sched.name, **sched.constants()})
    if record_inner:
        trace.inner = []
        trace.meta["x_history"] = [x0.copy()]
        trace.meta["xbar_history"] = [x0.copy()]
    xbar = x0.copy()
    x = x0.copy()
    for k in range(1, N + 1):
        gam, lam = sched.gamma(k), sched.lam(k)
        x_low = (1.0 - gam) * xbar + gam * x
        g = f.grad(x_low)
        rec = [] if record_inner else None
        x, x_tilde = prox_ag(g, xbar, x, lam, sched.beta(k), gam, sched.T(k),
                             sched.inner(k), h, geometry, fset, record=rec)
        new = (1.0 - lam) * xbar + lam * x_tilde
        step = float(np.linalg.norm(new - xbar))
        xbar = new
        obj = _objective(trace_objective, f, h, xbar)
        trace.append(k, stage, step, obj)
        if record_inner:
            trace.inner.append(rec)
            trace.meta["x_history"].append(x.copy())
            trace.meta["xbar_history"].append(xbar.copy())
    return xbar, trace


def nest_run(f: SmoothOracle, h: SmoothOracle, geometry: Geometry = EUCLIDEAN,
             fset: FeasibleSet | None = None, x0=None, N: int = 1, *,
             counters: OracleCounters | None = None, trace_objective=False, stage=0,
             wrap=True):
    """Single-loop accelerated gradient on ``f + h`` (one call to each per step).

    Uses ``gamma_k = 2/(k+1)`` and prox weight ``beta_k = 2 (L+M) / (nu k)``,
    which gives ``phi(xbar_k) - phi(u) <= 4 (L+M) V(x0, u) / (nu k (k+1))``,
    i.e. ``2 (L+M) V C / k^2`` with ``C = 2``.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    f, h, fset, x0, counters = _prepare(f, h, geometry, fset, x0, counters, wrap)
    Ltot = f.lipschitz + h.lipschitz
    nu = geometry.modulus
    trace = RunTrace(counters=counters, meta={"solver": "nest", "L": f.lipschitz,
                                               "M": h.lipschitz, "nu": nu})
    xbar = x0.copy()
    x = x0.copy()
    for k in range(1, N + 1):
        gam = 2.0 / (k + 1)
        x_low = (1.0 - gam) * xbar + gam * x
        g = f.grad(x_low) + h.grad(x_low)
        x = prox_map(geometry, fset, g, x, 2.0 * Ltot / (nu * k))
        new = (1.0 - gam) * xbar + gam * x
        step = float(np.linalg.norm(new - xbar))
        xbar = new
        obj = _objective(trace_objective, f, h, xbar)
        trace.append(k, stage, step, obj)
    return xbar, trace


def ags_restarted(f: SmoothOracle, h: SmoothOracle, geometry: Geometry = EUCLIDEAN,
                  fset: FeasibleSet | None = None, x0=None, N: int = 1, rounds: int = 1,
                  sched: AgsSchedule | None = None, *, counters: OracleCounters | None = None,
                  trace_objective=False):
    """``rounds`` back-to-back AGS runs of ``N`` steps, each started at the previous output.

    The guarantees are per run; restarting only gives an anytime flavour
    when the horizon is not known up front.
    """
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    counters = OracleCounters() if counters is None else counters
    f, h, fset, x, counters = _prepare(f, h, geometry, fset, x0, counters, True)
    trace = None
    for r in range(rounds):
        x, part = ags_run(f, h, geometry, fset, x, N, sched, counters=counters,
                          trace_objective=trace_objective, stage=r, wrap=False,
                          validate=(r == 0))
        for row in part.rows:
            row.k += r * N
        if trace is None:
            trace = part
        else:
            trace.extend(part)
    return x, trace
