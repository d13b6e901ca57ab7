"""First-order oracles, linear operators and call accounting.

The sliding methods are judged by how many times they touch each oracle, so
every gradient or operator evaluation made by a solver goes through one of
the counting wrappers here.  Function *values* are never part of the
headline counts; they land in ``OracleCounters.diagnostic``.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .bregman import FeasibleSet

__all__ = [
    "OracleCounters",
    "SmoothOracle",
    "LinearOperator",
    "SmoothnessReport",
    "counted",
    "counted_operator",
    "quadratic",
    "gram_quadratic",
    "least_squares",
    "zero_oracle",
    "check_smoothness",
    "adjoint_mismatch",
    "COUNTER_FIELDS",
]

COUNTER_FIELDS = ("n_grad_f", "n_grad_h", "n_apply_K", "n_apply_Kt")


@dataclass
class OracleCounters:
    """Per-run tallies of gradient and operator evaluations."""

    n_grad_f: int = 0
    n_grad_h: int = 0
    n_apply_K: int = 0
    n_apply_Kt: int = 0
    diagnostic: Counter = field(default_factory=Counter)

    def snapshot(self) -> dict:
        return {name: getattr(self, name) for name in COUNTER_FIELDS}

    def reset(self):
        for name in COUNTER_FIELDS:
            setattr(self, name, 0)
        self.diagnostic.clear()


@dataclass(frozen=True, eq=False)
class SmoothOracle:
    """Value/gradient pair of a convex function with an L-Lipschitz gradient.

    ``mu`` is an optional strong-convexity modulus (0 means plain convexity).
    """

    value: Callable[[np.ndarray], float]
    grad: Callable[[np.ndarray], np.ndarray]
    lipschitz: float
    mu: float = 0.0
    name: str = ""

    def __post_init__(self):
        if not self.lipschitz > 0:
            raise ValueError("Lipschitz constant must be positive")
        if self.mu < 0 or self.mu > self.lipschitz:
            raise ValueError("need 0 <= mu <= L")

    def __call__(self, x):
        return self.value(x)


def counted(oracle: SmoothOracle, counters: OracleCounters, channel: str) -> SmoothOracle:
    """Wrap ``oracle`` so each gradient call bumps ``n_grad_<channel>`` once."""
    if channel not in ("f", "h"):
        raise ValueError("channel must be 'f' or 'h'")
    attr = f"n_grad_{channel}"
    diag = f"eval_{channel}"
    inner_grad = oracle.grad
    inner_value = oracle.value

    def grad(x):
        setattr(counters, attr, getattr(counters, attr) + 1)
        return inner_grad(x)

    def value(x):
        counters.diagnostic[diag] += 1
        return inner_value(x)

    return replace(oracle, value=value, grad=grad)


@dataclass(frozen=True, eq=False)
class LinearOperator:
    """``K: R^n -> R^m`` with its adjoint and a norm (exact or upper bound)."""

    apply: Callable[[np.ndarray], np.ndarray]
    adjoint: Callable[[np.ndarray], np.ndarray]
    norm: float
    shape: tuple

    @classmethod
    def from_matrix(cls, A, norm=None):
        A = np.asarray(A, dtype=float)
        if norm is None:
            norm = float(np.linalg.norm(A, 2))
        return cls(A.__matmul__, A.T.__matmul__, float(norm), A.shape)

    def scaled(self, s: float) -> "LinearOperator":
        ap, ad = self.apply, self.adjoint
        return LinearOperator(
            lambda x: s * ap(x), lambda y: s * ad(y), abs(s) * self.norm, self.shape
        )

    def gram(self, x):
        return self.adjoint(self.apply(x))


def counted_operator(op: LinearOperator, counters: OracleCounters) -> LinearOperator:
    ap, ad = op.apply, op.adjoint

    def apply(x):
        counters.n_apply_K += 1
        return ap(x)

    def adjoint(y):
        counters.n_apply_Kt += 1
        return ad(y)

    return LinearOperator(apply, adjoint, op.norm, op.shape)


def quadratic(Q, c=None, const=0.0, lipschitz=None, mu=0.0, name="quadratic"):
    """``f(x) = x'Qx / 2 + c'x + const`` for symmetric PSD ``Q``."""
    Q = np.asarray(Q, dtype=float)
    n = Q.shape[0]
    c = np.zeros(n) if c is None else np.asarray(c, dtype=float)
    if lipschitz is None:
        lipschitz = float(np.linalg.eigvalsh(Q)[-1])

    def value(x):
        return 0.5 * float(x @ (Q @ x)) + float(c @ x) + const

    def grad(x):
        return Q @ x + c

    return SmoothOracle(value, grad, lipschitz, mu, name)


def gram_quadratic(B, scale=1.0, lipschitz=None, name="gram"):
    """``f(x) = scale * ||B x||^2 / 2`` evaluated in factored form."""
    B = np.asarray(B, dtype=float)
    if lipschitz is None:
        lipschitz = scale * float(np.linalg.norm(B, 2)) ** 2

    def value(x):
        r = B @ x
        return 0.5 * scale * float(r @ r)

    def grad(x):
        return scale * (B.T @ (B @ x))

    return SmoothOracle(value, grad, lipschitz, 0.0, name)


def least_squares(A, b, ridge=0.0, lipschitz=None, name="least-squares"):
    """``f(x) = ||A x - b||^2 / 2 + ridge * ||x||^2 / 2`` (strongly convex if ridge > 0)."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if lipschitz is None:
        lipschitz = float(np.linalg.norm(A, 2)) ** 2 + ridge

    def value(x):
        r = A @ x - b
        return 0.5 * float(r @ r) + 0.5 * ridge * float(x @ x)

    def grad(x):
        g = A.T @ (A @ x - b)
        if ridge:
            g = g + ridge * x
        return g

    return SmoothOracle(value, grad, lipschitz, ridge, name)


def zero_oracle(n, lipschitz=1.0):
    zeros = np.zeros(n)
    return SmoothOracle(lambda x: 0.0, lambda x: zeros.copy(), lipschitz, 0.0, "zero")


@dataclass(frozen=True)
class SmoothnessReport:
    max_violation_upper: float
    max_violation_lower: float
    fd_rel_error: float
    samples: int


def _fd_gradient(value, x, h, rng, max_coords=512):
    n = x.size
    if n <= max_coords:
        g = np.empty(n)
        e = np.zeros(n)
        for i in range(n):
            e[i] = h
            g[i] = (value(x + e) - value(x - e)) / (2 * h)
            e[i] = 0.0
        return g, None
    dirs = rng.standard_normal((max_coords, n))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    dd = np.array([(value(x + h * d) - value(x - h * d)) / (2 * h) for d in dirs])
    return dd, dirs


def check_smoothness(
    oracle: SmoothOracle,
    fset: FeasibleSet,
    samples=100,
    rng_seed=0,
    norm_order=2,
    fd_probes=5,
    lipschitz=None,
    mu=None,
):
    """Probe the quadratic upper/lower model bounds on random feasible pairs.

    Reports the largest excess of ``f(x) - l_f(u, x)`` over ``L/2 ||x-u||^2``
    and the largest shortfall below ``mu/2 ||x-u||^2`` (with ``mu = 0`` this
    is a convexity check), plus the relative error of the gradient against
    central differences with step ``1e-6 (1 + ||x||)``.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    L = oracle.lipschitz if lipschitz is None else lipschitz
    mu = oracle.mu if mu is None else mu
    rng = np.random.default_rng(rng_seed)
    U = fset.sample(rng, samples)
    V = fset.sample(rng, samples)
    steps = np.array([1.0, 0.1, 0.01])[np.arange(samples) % 3]
    up = lo = 0.0
    for u, v, t in zip(U, V, steps):
        x = u + t * (v - u)
        d = x - u
        gap = oracle.value(x) - oracle.value(u) - float(oracle.grad(u) @ d)
        sq = float(np.linalg.norm(d, ord=norm_order)) ** 2
        up = max(up, gap - 0.5 * L * sq)
        lo = max(lo, 0.5 * mu * sq - gap)

    fd_err = 0.0
    for x in U[: min(fd_probes, samples)]:
        h = 1e-6 * (1.0 + float(np.linalg.norm(x)))
        g = oracle.grad(x)
        approx, dirs = _fd_gradient(oracle.value, x, h, rng)
        exact = g if dirs is None else dirs @ g
        scale = max(float(np.linalg.norm(exact)), 1e-8)
        fd_err = max(fd_err, float(np.linalg.norm(approx - exact)) / scale)
    return SmoothnessReport(up, lo, fd_err, samples)


def adjoint_mismatch(op: LinearOperator, samples=20, seed=0) -> float:
    """Largest relative gap between <Kx, y> and <x, K'y> on random pairs."""
    rng = np.random.default_rng(seed)
    m, n = op.shape
    worst = 0.0
    for _ in range(samples):
        x = rng.standard_normal(n)
        y = rng.standard_normal(m)
        Kx = op.apply(x)
        lhs = float(Kx @ y)
        rhs = float(x @ op.adjoint(y))
        scale = max(float(np.linalg.norm(Kx) * np.linalg.norm(y)), 1e-300)
        worst = max(worst, abs(lhs - rhs) / scale)
    return worst
