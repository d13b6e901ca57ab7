"""Bregman geometries, feasible sets and the composite prox-mapping.

Every inner step of the sliding method reduces to

    argmin_{u in X}  <l, u> + beta * V(x, u) + tau * V(w, u)

with two prox centers ``x`` and ``w``.  For the two supported geometries the
minimizer is available in closed form (up to a scalar Lagrange multiplier on
the return-floor halfspace), so the solves here are exact to round-off.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import xlogy

from .errors import (
    BisectionFailed,
    EntropyDomainViolation,
    IncompatibleGeometry,
    NonFeasiblePoint,
    NumericalOverflow,
)

__all__ = [
    "TOL_PROX",
    "TOL_FEAS",
    "MAX_BISECT",
    "ENTROPY_FLOOR",
    "Geometry",
    "EUCLIDEAN",
    "ENTROPY",
    "FeasibleSet",
    "ProxSubproblem",
    "divergence",
    "prox_map",
    "solve_prox",
    "prox_optimality_residual",
    "project_simplex",
]

TOL_PROX = 1e-10
TOL_FEAS = 1e-9
MAX_BISECT = 200
ENTROPY_FLOOR = 1e-300

_KINDS = ("euclidean", "entropy")
_SET_KINDS = (
    "whole-space",
    "box",
    "simplex",
    "simplex-with-halfspace",
    "grouped-unit-balls",
)
_SIMPLEX_KINDS = ("simplex", "simplex-with-halfspace")


@dataclass(frozen=True)
class Geometry:
    """A prox-function together with its strong-convexity modulus.

    ``euclidean`` is ``V(x, u) = ||u - x||_2^2 / 2`` paired with the l2 norm.
    ``entropy`` is the Kullback-Leibler divergence ``sum u log(u / x)`` on the
    simplex, paired with the l1 norm (modulus 1 by Pinsker's inequality).
    """

    kind: str = "euclidean"
    modulus: float = 1.0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown geometry kind {self.kind!r}")
        if not (0.0 < self.modulus <= 1.0):
            raise ValueError("modulus must lie in (0, 1] for the supported prox-functions")

    @property
    def norm_order(self) -> int:
        return 2 if self.kind == "euclidean" else 1

    @property
    def quadratic_growth(self) -> bool:
        """Whether ``V(x, u) <= ||x - u||^2 / 2`` holds on the whole set."""
        return self.kind == "euclidean"

    def norm(self, v) -> float:
        return float(np.linalg.norm(np.ravel(v), ord=self.norm_order))

    def divergence(self, x, u) -> float:
        return divergence(self, x, u)


EUCLIDEAN = Geometry("euclidean")
ENTROPY = Geometry("entropy")


def project_simplex(z):
    """Euclidean projection onto the unit simplex (sort-and-threshold)."""
    z = np.asarray(z, dtype=float)
    s = np.sort(z)[::-1]
    css = np.cumsum(s) - 1.0
    idx = np.arange(1, z.size + 1)
    rho = np.nonzero(s - css / idx > 0)[0][-1]
    theta = css[rho] / (rho + 1)
    return np.maximum(z - theta, 0.0)


def _raise_floor(u_of, b, eta):
    """Smallest multiplier ``lam >= 0`` with ``b @ u_of(lam) >= eta``.

    ``lam -> b @ u_of(lam)`` must be nondecreasing.  Returns the point at the
    feasible end of the final bracket.
    """
    u = u_of(0.0)
    if b @ u >= eta:
        return u
    lo, hi = 0.0, 1.0
    for _ in range(MAX_BISECT):
        u_hi = u_of(hi)
        if b @ u_hi >= eta:
            break
        lo, hi = hi, 2.0 * hi
    else:
        raise BisectionFailed(f"no multiplier bracket up to {hi:g}; is max(b) >= eta?")
    slack_tol = 1e-15 * max(1.0, abs(eta))
    for _ in range(MAX_BISECT):
        if b @ u_hi - eta <= slack_tol:
            break
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        u_mid = u_of(mid)
        if b @ u_mid >= eta:
            hi, u_hi = mid, u_mid
        else:
            lo = mid
    return u_hi


@dataclass(frozen=True, eq=False)
class FeasibleSet:
    """Closed convex feasible region with exact Euclidean projection.

    Use the classmethod constructors rather than the raw initializer.
    """

    kind: str
    dim: int
    lower: np.ndarray | None = field(default=None, repr=False)
    upper: np.ndarray | None = field(default=None, repr=False)
    b: np.ndarray | None = field(default=None, repr=False)
    eta: float | None = None

    def __post_init__(self):
        if self.kind not in _SET_KINDS:
            raise ValueError(f"unknown set kind {self.kind!r}")
        if self.dim < 1:
            raise ValueError("dimension must be positive")
        if self.kind == "grouped-unit-balls" and self.dim % 2:
            raise ValueError("grouped unit balls need an even dimension (groups of 2)")
        if self.kind == "simplex-with-halfspace":
            if self.b is None or self.eta is None or self.b.shape != (self.dim,):
                raise ValueError("halfspace needs b of length dim and a scalar eta")
            if self.b.max() < self.eta:
                raise ValueError("max(b) < eta: the halfspace misses the simplex")

    @classmethod
    def whole_space(cls, n):
        return cls("whole-space", int(n))

    @classmethod
    def box(cls, lower, upper, n=None):
        if n is None:
            n = np.size(lower) if np.ndim(lower) else np.size(upper)
        lo = np.broadcast_to(np.asarray(lower, dtype=float), (n,)).copy()
        hi = np.broadcast_to(np.asarray(upper, dtype=float), (n,)).copy()
        if np.any(lo > hi):
            raise ValueError("box with lower > upper")
        return cls("box", int(n), lower=lo, upper=hi)

    @classmethod
    def simplex(cls, n):
        return cls("simplex", int(n))

    @classmethod
    def simplex_halfspace(cls, b, eta):
        b = np.asarray(b, dtype=float).copy()
        return cls("simplex-with-halfspace", b.size, b=b, eta=float(eta))

    @classmethod
    def grouped_balls(cls, n_groups):
        return cls("grouped-unit-balls", 2 * int(n_groups))

    @property
    def n_groups(self) -> int:
        return self.dim // 2

    def violation(self, x) -> float:
        """Largest constraint violation of ``x`` (0 when feasible)."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise NonFeasiblePoint(f"expected shape ({self.dim},), got {x.shape}")
        if not np.all(np.isfinite(x)):
            return np.inf
        if self.kind == "whole-space":
            return 0.0
        if self.kind == "box":
            return float(max(0.0, np.max(self.lower - x), np.max(x - self.upper)))
        if self.kind == "grouped-unit-balls":
            norms = np.hypot(x[0::2], x[1::2])
            return float(max(0.0, norms.max() - 1.0))
        v = max(0.0, -x.min(), abs(x.sum() - 1.0))
        if self.kind == "simplex-with-halfspace":
            v = max(v, self.eta - self.b @ x)
        return float(v)

    def contains(self, x, tol=TOL_FEAS) -> bool:
        return self.violation(x) <= tol

    def check(self, x, name="point", tol=TOL_FEAS):
        v = self.violation(x)
        if v > tol:
            raise NonFeasiblePoint(f"{name} violates {self.kind} by {v:.3g}")

    def project(self, z):
        """Euclidean projection of ``z`` onto the set."""
        z = np.asarray(z, dtype=float)
        if self.kind == "whole-space":
            return z.copy()
        if self.kind == "box":
            return np.clip(z, self.lower, self.upper)
        if self.kind == "grouped-unit-balls":
            return _project_groups(z)
        if self.kind == "simplex":
            return project_simplex(z)
        b = self.b
        return _raise_floor(lambda lam: project_simplex(z + lam * b), b, self.eta)

    def interior_point(self):
        """A deterministic, strictly feasible starting point."""
        n = self.dim
        if self.kind in ("whole-space", "grouped-unit-balls"):
            return np.zeros(n)
        if self.kind == "box":
            lo = np.where(np.isfinite(self.lower), self.lower, np.minimum(self.upper, 0.0))
            hi = np.where(np.isfinite(self.upper), self.upper, np.maximum(self.lower, 0.0))
            lo = np.where(np.isfinite(lo), lo, 0.0)
            hi = np.where(np.isfinite(hi), hi, 0.0)
            return 0.5 * (lo + hi)
        x = np.full(n, 1.0 / n)
        if self.kind == "simplex-with-halfspace" and self.b @ x < self.eta:
            j = int(np.argmax(self.b))
            gap = self.b[j] - self.b @ x
            t = min(1.0, (self.eta - self.b @ x) / gap)
            # stay strictly inside so the entropy prox sees positive components
            t = min(t + 0.5 * (1.0 - t), 1.0 - 1e-6)
            x = (1.0 - t) * x
            x[j] += t
        return x

    def sample(self, rng, size):
        """``size`` random feasible points, one per row."""
        n = self.dim
        if self.kind == "whole-space":
            return rng.standard_normal((size, n))
        if self.kind == "box":
            lo = np.where(np.isfinite(self.lower), self.lower, -1.0)
            hi = np.where(np.isfinite(self.upper), self.upper, 1.0)
            lo, hi = np.minimum(lo, hi), np.maximum(lo, hi)
            return np.clip(rng.uniform(lo, hi, size=(size, n)), self.lower, self.upper)
        if self.kind == "grouped-unit-balls":
            g = rng.standard_normal((size, n // 2, 2))
            g /= np.maximum(np.linalg.norm(g, axis=2, keepdims=True), 1e-300)
            g *= np.sqrt(rng.uniform(size=(size, n // 2, 1)))
            return g.reshape(size, n)
        pts = rng.dirichlet(np.ones(n), size=size)
        if self.kind == "simplex-with-halfspace":
            j = int(np.argmax(self.b))
            for row in pts:
                val = self.b @ row
                if val < self.eta:
                    t = (self.eta - val) / (self.b[j] - val)
                    t = t + rng.uniform() * (1.0 - t)
                    row *= 1.0 - t
                    row[j] += t
        return pts


def _project_groups(z):
    pairs = z.reshape(-1, 2)
    norms = np.hypot(pairs[:, 0], pairs[:, 1])
    scale = np.ones_like(norms)
    big = norms > 1.0
    scale[big] = 1.0 / norms[big]
    return (pairs * scale[:, None]).reshape(z.shape)


def divergence(geom: Geometry, x, u, fset: FeasibleSet | None = None) -> float:
    """Prox-function value ``V(x, u)``.

    Entropy centers are clamped below at :data:`ENTROPY_FLOOR` before taking
    logs, so exact zeros in ``x`` are tolerated.
    """
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if fset is not None:
        fset.check(x, "x")
        fset.check(u, "u")
    if geom.kind == "euclidean":
        d = u - x
        return 0.5 * float(d @ d)
    if not (np.all(np.isfinite(x)) and np.all(x >= -TOL_FEAS)):
        raise EntropyDomainViolation("entropy center must be finite and nonnegative")
    if np.any(u < -TOL_FEAS):
        raise EntropyDomainViolation("entropy argument must be nonnegative")
    u = np.maximum(u, 0.0)
    xc = np.maximum(x, ENTROPY_FLOOR)
    val = np.sum(xlogy(u, u) - u * np.log(xc)) - u.sum() + x.sum()
    return max(float(val), 0.0)


@dataclass(frozen=True, eq=False)
class ProxSubproblem:
    """Data of ``min <linear, u> + w1 V(center, u) + w2 V(prev, u)`` over ``fset``."""

    linear: np.ndarray
    center: np.ndarray
    center_weight: float
    prev: np.ndarray | None = None
    prev_weight: float = 0.0
    geometry: Geometry = EUCLIDEAN
    fset: FeasibleSet | None = None

    @property
    def total_weight(self) -> float:
        return self.center_weight + self.prev_weight

    def feasible_set(self) -> FeasibleSet:
        if self.fset is not None:
            return self.fset
        return FeasibleSet.whole_space(np.size(self.linear))

    def validate(self):
        if self.center_weight < 0 or self.prev_weight < 0:
            raise ValueError("prox weights must be nonnegative")
        if self.total_weight <= 0:
            raise ValueError("prox weights must not both vanish")
        fs = self.feasible_set()
        fs.check(self.center, "center")
        if self.prev_weight > 0:
            if self.prev is None:
                raise ValueError("positive prev_weight without a prev anchor")
            fs.check(self.prev, "prev")
        if self.geometry.kind == "entropy" and fs.kind not in _SIMPLEX_KINDS:
            raise IncompatibleGeometry("entropy prox needs a simplex-type set")

    def objective(self, u) -> float:
        val = float(self.linear @ u)
        val += self.center_weight * divergence(self.geometry, self.center, u)
        if self.prev_weight > 0:
            val += self.prev_weight * divergence(self.geometry, self.prev, u)
        return val


def _softmax(z):
    if not np.all(np.isfinite(z)):
        raise NumericalOverflow("non-finite logit in the entropy prox")
    e = np.exp(z - z.max())
    return e / e.sum()


def prox_map(geom, fset, linear, center, center_weight, prev=None, prev_weight=0.0):
    """Unchecked fast path of :func:`solve_prox` used inside solver loops."""
    w = center_weight + prev_weight
    if geom.kind == "euclidean":
        c = center_weight * center - linear
        if prev_weight > 0:
            c = c + prev_weight * prev
        if not np.all(np.isfinite(c)):
            raise NumericalOverflow("non-finite anchor in the euclidean prox")
        return fset.project(c / w)

    z = -linear / w
    if center_weight > 0:
        z = z + (center_weight / w) * np.log(np.maximum(center, ENTROPY_FLOOR))
    if prev_weight > 0:
        z = z + (prev_weight / w) * np.log(np.maximum(prev, ENTROPY_FLOOR))
    if fset.kind == "simplex":
        return _softmax(z)
    if fset.kind != "simplex-with-halfspace":
        raise IncompatibleGeometry("entropy prox needs a simplex-type set")
    b = fset.b
    if not np.all(np.isfinite(z)):
        raise NumericalOverflow("non-finite logit in the entropy prox")
    return _raise_floor(lambda lam: _softmax(z + (lam / w) * b), b, fset.eta)


def solve_prox(sub: ProxSubproblem):
    """Exact minimizer of a :class:`ProxSubproblem`.

    Euclidean geometry reduces to projecting the weighted anchor average
    ``(w1 x + w2 u_prev - l) / (w1 + w2)``; entropy on the simplex is a
    log-space softmax of the weighted geometric mean of the anchors.  The
    return floor ``b @ u >= eta`` is handled by bisection on its multiplier.
    """
    sub.validate()
    fs = sub.feasible_set()
    prev = sub.prev if sub.prev_weight > 0 else None
    return prox_map(
        sub.geometry,
        fs,
        np.asarray(sub.linear, dtype=float),
        np.asarray(sub.center, dtype=float),
        float(sub.center_weight),
        prev,
        float(sub.prev_weight),
    )


def prox_optimality_residual(sub: ProxSubproblem, u_star, samples=64, seed=0, points=()):
    """Worst violation of the three-point prox inequality at ``u_star``.

    For an exact minimizer ``u*`` of ``q(u) + w1 V(x, u) + w2 V(w, u)`` every
    feasible ``u`` satisfies ``F(u*) <= F(u) - (w1 + w2) V(u*, u)``.  The
    inequality is probed at random feasible points, both anchors and any
    extra ``points``; the largest excess (clipped at zero) is returned.
    """
    fs = sub.feasible_set()
    fs.check(u_star, "u_star")
    rng = np.random.default_rng(seed)
    cands = list(fs.sample(rng, samples)) if samples else []
    cands.append(np.asarray(sub.center, dtype=float))
    if sub.prev is not None:
        cands.append(np.asarray(sub.prev, dtype=float))
    cands.extend(np.asarray(p, dtype=float) for p in points)
    lhs = sub.objective(u_star)
    w = sub.total_weight
    worst = 0.0
    for u in cands:
        rhs = sub.objective(u) - w * divergence(sub.geometry, u_star, u)
        worst = max(worst, lhs - rhs)
    return worst
