"""Smoothing of bilinear saddle-point problems.

Problems of the form ``min_x f(x) + max_{y in Y} <Kx, y> - J(y)`` are turned
into smooth composite problems by subtracting ``rho * W(y0, y)`` inside the
max.  The smoothed term ``h_rho`` has a ``||K||^2 / (rho * omega)``-Lipschitz
gradient ``K' y*(x)``, so it can be handed to the sliding solver as the
cheap component while ``f`` plays the expensive one.

``J`` is either zero or the isotropic quadratic ``j/2 ||y||^2``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .bregman import EUCLIDEAN, FeasibleSet, Geometry, divergence, prox_map
from .errors import IncompatibleGeometry, InvalidConstants, InvalidRadius
from .oracles import LinearOperator, OracleCounters, SmoothOracle, counted, counted_operator
from .sliding import ags_run, ceil_int, schedule_cor2

__all__ = [
    "SaddleInstance",
    "SmoothedObjective",
    "dual_maximizer",
    "smoothed_grad",
    "psi",
    "subgradient",
    "default_radius_sq",
    "spp_iterations",
    "solve_spp",
]


def _max_divergence(W: Geometry, Y: FeasibleSet, y0: np.ndarray) -> float:
    if W.kind == "euclidean":
        if Y.kind == "grouped-unit-balls":
            g = np.hypot(y0[0::2], y0[1::2])
            return float(0.5 * np.sum((1.0 + g) ** 2))
        if Y.kind == "simplex":
            # a convex function peaks at a vertex
            d2 = np.sum(y0**2) - 2.0 * y0 + 1.0
            return float(0.5 * d2.max())
    elif Y.kind == "simplex":
        return float(-np.log(np.maximum(y0, 1e-300)).min())
    raise IncompatibleGeometry(f"no closed-form Omega for {W.kind} on {Y.kind}")


@dataclass(frozen=True, eq=False)
class SaddleInstance:
    """``min_x f(x) + max_{y in Y} <Kx, y> - J(y)``.

    ``W`` is the dual prox-function (modulus ``omega = W.modulus``) centered
    at ``y0``; ``Omega`` bounds ``W(y0, y)`` over ``Y`` and is computed
    exactly when omitted.  ``j`` is the weight of ``J(y) = j/2 ||y||^2``.
    """

    f: SmoothOracle
    K: LinearOperator
    Y: FeasibleSet
    W: Geometry = EUCLIDEAN
    y0: np.ndarray | None = None
    Omega: float | None = None
    j: float = 0.0
    name: str = "saddle"

    def __post_init__(self):
        m = self.K.shape[0]
        if self.Y.dim != m:
            raise ValueError(f"dual set has dimension {self.Y.dim}, K has {m} rows")
        if self.Y.kind not in ("grouped-unit-balls", "simplex"):
            raise IncompatibleGeometry("dual set must be grouped unit balls or a simplex")
        if self.W.kind == "entropy" and (self.Y.kind != "simplex" or self.j):
            raise IncompatibleGeometry("entropy dual prox needs a simplex and J = 0")
        if self.j < 0:
            raise InvalidConstants("J weight must be nonnegative")
        y0 = self.y0
        if y0 is None:
            y0 = np.zeros(m) if self.Y.kind == "grouped-unit-balls" else np.full(m, 1.0 / m)
        y0 = np.asarray(y0, dtype=float)
        self.Y.check(y0, "y0")
        object.__setattr__(self, "y0", y0)
        if self.Omega is None:
            object.__setattr__(self, "Omega", _max_divergence(self.W, self.Y, y0))
        if not self.Omega >= 0:
            raise InvalidConstants("Omega must be nonnegative")

    @property
    def omega(self) -> float:
        return self.W.modulus

    @property
    def n(self) -> int:
        return self.K.shape[1]

    def omega_violation(self, samples=200, seed=0) -> float:
        """Largest ``W(y0, v) - Omega`` over sampled ``v`` in ``Y`` (<= 0 if valid)."""
        rng = np.random.default_rng(seed)
        vals = [divergence(self.W, self.y0, v) for v in self.Y.sample(rng, samples)]
        return max(vals) - self.Omega

    def support(self, v) -> float:
        """``max_{y in Y} <v, y> - J(y)``."""
        if self.j == 0:
            if self.Y.kind == "grouped-unit-balls":
                return float(np.sum(np.hypot(v[0::2], v[1::2])))
            return float(v.max())
        y = self.Y.project(v / self.j)
        return float(v @ y) - 0.5 * self.j * float(y @ y)

    def smoothed(self, rho, counters=None) -> "SmoothedObjective":
        return SmoothedObjective(self, rho, counters)


def psi(inst: SaddleInstance, x) -> float:
    """Exact nonsmooth objective; uncounted, for reporting."""
    x = np.asarray(x, dtype=float)
    return inst.f.value(x) + inst.support(inst.K.apply(x))


def subgradient(inst: SaddleInstance, x):
    """A subgradient of ``psi`` at ``x``: ``grad f(x) + K' y`` with ``y`` maximizing the support."""
    x = np.asarray(x, dtype=float)
    v = inst.K.apply(x)
    if inst.j:
        y = inst.Y.project(v / inst.j)
    elif inst.Y.kind == "grouped-unit-balls":
        norms = np.repeat(np.hypot(v[0::2], v[1::2]), 2)
        y = np.divide(v, norms, out=np.zeros_like(v), where=norms > 0)
    else:
        y = np.zeros_like(v)
        y[int(np.argmax(v))] = 1.0
    return inst.f.grad(x) + inst.K.adjoint(y)


def _argmax(inst: SaddleInstance, rho, Kx):
    if inst.W.kind == "euclidean":
        return inst.Y.project((Kx + rho * inst.y0) / (rho + inst.j))
    return prox_map(inst.W, inst.Y, -Kx, inst.y0, rho)


def dual_maximizer(inst: SaddleInstance, rho, x, counters: OracleCounters | None = None):
    """``argmax_y <Kx, y> - J(y) - rho W(y0, y)``; one ``K`` apply is counted."""
    if not rho > 0:
        raise InvalidConstants("rho must be positive")
    K = inst.K if counters is None else counted_operator(inst.K, counters)
    return _argmax(inst, rho, K.apply(np.asarray(x, dtype=float)))


class SmoothedObjective:
    """``h_rho`` for a fixed smoothing weight, plus its gradient oracle.

    Gradient calls go through a counted copy of ``K``: each one records a
    ``K`` and a ``K'`` application in ``counters``.  Values use the raw
    operator and are not counted here.
    """

    def __init__(self, inst: SaddleInstance, rho, counters: OracleCounters | None = None):
        if not rho > 0:
            raise InvalidConstants("rho must be positive")
        self.inst = inst
        self.rho = float(rho)
        self.counters = OracleCounters() if counters is None else counters
        self.M = inst.K.norm**2 / (self.rho * inst.omega)
        self._K = counted_operator(inst.K, self.counters)

    def dual_maximizer(self, x):
        return _argmax(self.inst, self.rho, self._K.apply(x))

    def grad(self, x):
        return self._K.adjoint(self.dual_maximizer(x))

    def value(self, x) -> float:
        inst = self.inst
        Kx = inst.K.apply(x)
        y = _argmax(inst, self.rho, Kx)
        val = float(Kx @ y) - self.rho * divergence(inst.W, inst.y0, y)
        if inst.j:
            val -= 0.5 * inst.j * float(y @ y)
        return val

    def psi_rho(self, x) -> float:
        return self.inst.f.value(x) + self.value(x)

    def oracle(self, lipschitz=None) -> SmoothOracle:
        """``h_rho`` as a :class:`SmoothOracle` (optionally with a looser constant)."""
        M = self.M if lipschitz is None else max(float(lipschitz), self.M)
        return SmoothOracle(self.value, self.grad, M, 0.0, "h_rho")


def smoothed_grad(sm: SmoothedObjective, x):
    return sm.grad(np.asarray(x, dtype=float))


def default_radius_sq(geometry: Geometry, fset: FeasibleSet | None):
    """Diameter bound on ``V(x0, x*)`` for compact simplex-type sets, else ``None``."""
    if fset is None or fset.kind not in ("simplex", "simplex-with-halfspace"):
        return None
    return math.log(fset.dim) if geometry.kind == "entropy" else 1.0


def spp_iterations(L, radius_sq, nu, eps) -> int:
    """Smallest ``N`` with ``9 L R^2 / (nu N (N+1)) <= eps / 2``."""
    target = 18.0 * L * radius_sq / (nu * eps)
    N = max(1, ceil_int((math.sqrt(1.0 + 4.0 * target) - 1.0) / 2.0))
    while N * (N + 1) < target:
        N += 1
    while N > 1 and (N - 1) * N >= target:
        N -= 1
    return N


def solve_spp(inst: SaddleInstance, x0, eps, geometry: Geometry = EUCLIDEAN,
              fset: FeasibleSet | None = None, radius_sq=None, *,
              counters: OracleCounters | None = None, trace_objective=False):
    """Smooth with ``rho = eps / (2 Omega)`` and run AGS to an ``eps``-solution.

    ``radius_sq`` must bound ``V(x0, x*)``; it defaults to the set diameter
    for simplex-type primal sets and is required otherwise.  The number of
    outer steps is the smallest ``N`` whose rate bound reaches ``eps / 2``,
    which together with the smoothing error ``rho * Omega = eps / 2``
    certifies ``psi(x) - psi* <= eps``.

    If ``M = ||K||^2 / (rho omega)`` does not exceed ``L`` the sliding regime
    does not apply; the roles of ``f`` and ``h_rho`` are swapped (with a
    warning) so the schedule stays valid.

    ``trace_objective=True`` logs the exact nonsmooth ``psi``.
    """
    if not eps > 0:
        raise InvalidConstants("eps must be positive")
    x0 = np.asarray(x0, dtype=float)
    if fset is None:
        fset = FeasibleSet.whole_space(x0.size)
    if radius_sq is None:
        radius_sq = default_radius_sq(geometry, fset)
        if radius_sq is None:
            raise InvalidRadius("radius_sq is required for an unbounded primal set")
    if not radius_sq > 0:
        raise InvalidRadius("radius_sq must be positive")
    if inst.Omega <= 0:
        raise InvalidConstants("Omega must be positive to smooth")

    counters = OracleCounters() if counters is None else counters
    rho = eps / (2.0 * inst.Omega)
    sm = SmoothedObjective(inst, rho, counters)
    L, M, nu = inst.f.lipschitz, sm.M, geometry.modulus
    f = counted(inst.f, counters, "f")
    h = counted(sm.oracle(), counters, "h")
    if M >= L:
        regime = "sliding"
        outer, inner = f, h
    else:
        regime = "swapped"
        warnings.warn(
            f"smoothed constant M={M:.4g} is below L={L:.4g}; linearizing h_rho in the outer loop",
            RuntimeWarning,
            stacklevel=2,
        )
        outer, inner = h, f
    N = spp_iterations(outer.lipschitz, radius_sq, nu, eps)
    sched = schedule_cor2(outer.lipschitz, inner.lipschitz, nu)
    obj = (lambda x: psi(inst, x)) if trace_objective is True else trace_objective
    xbar, trace = ags_run(outer, inner, geometry, fset, x0, N, sched, counters=counters,
                          trace_objective=obj, wrap=False)
    trace.meta.update(solver="ags-spp", rho=rho, M=M, Omega=inst.Omega, eps=eps,
                      radius_sq=float(radius_sq), N=N, regime=regime)
    return xbar, trace
