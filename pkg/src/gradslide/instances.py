"""Seeded test-problem generators and spectral-constant estimation.

Three families:

* ``portfolio``: minimum-variance allocation over the simplex with a return
  floor, where the factor part ``A'FA`` is cheap and the residual
  covariance ``D`` is dense and expensive.
* ``tv``: compressed-sensing reconstruction of a piecewise-constant image with
  an isotropic total-variation penalty, posed as a bilinear saddle problem.
* ``quadratic``: a plain strongly convex QP split into two quadratics with
  prescribed constants, handy for restart experiments.

Every array is drawn from its own child of ``SeedSequence(seed)``, so the same
seed reproduces an instance bit for bit.  Instances round-trip through a small
JSON layout (see :func:`instance_to_dict`).
"""

from __future__ import annotations

import base64
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .bregman import ENTROPY, EUCLIDEAN, FeasibleSet
from .errors import DimensionError, NoConvergence
from .oracles import LinearOperator, SmoothOracle, gram_quadratic, least_squares, quadratic
from .saddle import SaddleInstance

__all__ = [
    "SCHEMA",
    "PortfolioInstance",
    "TvInstance",
    "QuadraticInstance",
    "gen_portfolio",
    "gen_tv",
    "gen_quadratic",
    "estimate_lmax",
    "finite_difference_operator",
    "phantom",
    "instance_to_dict",
    "instance_from_dict",
    "save_instance",
    "load_instance",
]

SCHEMA = "gradslide.instance/1"
INLINE_LIMIT = 10_000
_DENSE_SPECTRUM_MAX = 2000


def _streams(seed, names):
    children = np.random.SeedSequence(int(seed)).spawn(len(names))
    return {name: np.random.default_rng(c) for name, c in zip(names, children)}


def estimate_lmax(op, n=None, tol=1e-10, max_iters=10_000, seed=0) -> float:
    """Largest eigenvalue of a symmetric PSD operator by power iteration.

    ``op`` is a square matrix or a matvec callable (then ``n`` is required).
    Iterates until the Rayleigh quotient changes by at most ``tol`` relative,
    then returns it inflated by ``1 + tol`` so the result errs high.  Raises
    :class:`NoConvergence` carrying the last estimate when ``max_iters`` runs
    out.
    """
    if callable(op):
        if n is None:
            raise ValueError("n is required for a matvec operator")
        matvec = op
    else:
        mat = np.asarray(op, dtype=float)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise DimensionError("operator must be square")
        n = mat.shape[0]
        matvec = mat.__matmul__
    v = np.random.default_rng(seed).standard_normal(n)
    v /= np.linalg.norm(v)
    theta = 0.0
    for _ in range(max_iters):
        w = matvec(v)
        new = float(v @ w)
        norm = float(np.linalg.norm(w))
        if norm == 0.0:
            return 0.0
        v = w / norm
        if abs(new - theta) <= tol * abs(new):
            # one more Rayleigh quotient at the refined vector
            return max(new, float(v @ matvec(v))) * (1.0 + tol)
        theta = new
    raise NoConvergence(f"power iteration stalled after {max_iters} steps", theta * (1.0 + tol))


def _sq_spectral_norm(M, seed=0):
    """``||M||_2^2`` exactly for moderate sizes, by power iteration otherwise."""
    if min(M.shape) <= _DENSE_SPECTRUM_MAX:
        return float(np.linalg.norm(M, 2)) ** 2
    return estimate_lmax(lambda x: M.T @ (M @ x), M.shape[1], seed=seed)


# -- portfolio -----------------------------------------------------------------


@dataclass(eq=False)
class PortfolioInstance:
    """``min x'(A'FA + D)x / 2`` over the simplex with ``b'x >= eta``.

    ``F = B'B`` and ``D = d_scale * C'C`` are kept in factored form.  ``L``
    and ``M`` are the exact spectral norms of ``D`` and ``A'FA``.
    """

    n: int
    m: int
    seed: int
    ratio: float
    b: np.ndarray
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    d_scale: float
    eta: float
    L: float
    M: float
    kind: str = field(default="portfolio", init=False)

    @property
    def F(self):
        return self.B.T @ self.B

    @property
    def D(self):
        return self.d_scale * (self.C.T @ self.C)

    @property
    def geometry(self):
        return ENTROPY

    def feasible_set(self):
        return FeasibleSet.simplex_halfspace(self.b, self.eta)

    def x0(self):
        return self.feasible_set().interior_point()

    def f_oracle(self) -> SmoothOracle:
        """Residual-risk term ``x'Dx / 2``; the expensive component."""
        return gram_quadratic(self.C, self.d_scale, self.L, name="residual-risk")

    def h_oracle(self) -> SmoothOracle:
        """Factor-risk term ``x'A'FAx / 2``."""
        return gram_quadratic(self.B @ self.A, 1.0, self.M, name="factor-risk")

    def objective(self, x) -> float:
        return self.f_oracle().value(x) + self.h_oracle().value(x)

    def costs(self) -> dict:
        return {"cost_grad_f": float(self.n), "cost_grad_h": float(self.m), "cost_K": 0.0}


def gen_portfolio(n, m, ratio, seed=0, eta=1.0) -> PortfolioInstance:
    """Random factor-model portfolio with ``M / L = ratio``.

    ``b ~ U[0,5]^n``, ``A ~ U[0,1]^{m x n}``, ``F = B'B`` with ``B`` standard
    normal ``ceil(m/2) x m``, and ``D`` a rescaled ``C'C`` with ``C`` standard
    normal ``ceil(n/2) x n`` so that ``lambda_max(D) = M / ratio``.
    """
    n, m = int(n), int(m)
    # m > n is allowed: the factor part is then just rank-deficient in another way
    if n < 2 or m < 1:
        raise DimensionError(f"need n >= 2 and m >= 1 (got n={n}, m={m})")
    if not ratio >= 1:
        raise DimensionError("ratio M/L must be >= 1")
    rng = _streams(seed, ("b", "A", "B", "C"))
    b = rng["b"].uniform(0.0, 5.0, n)
    A = rng["A"].uniform(0.0, 1.0, (m, n))
    B = rng["B"].standard_normal((math.ceil(m / 2), m))
    C = rng["C"].standard_normal((math.ceil(n / 2), n))
    M = _sq_spectral_norm(B @ A)
    L = M / float(ratio)
    d_scale = L / _sq_spectral_norm(C)
    if b.max() < eta:
        raise DimensionError("return floor unreachable for this draw; pick another seed")
    return PortfolioInstance(n, m, int(seed), float(ratio), b, A, B, C, d_scale, float(eta), L, M)


# -- total variation -------------------------------------------------------------


def finite_difference_operator(rows, cols) -> LinearOperator:
    """Forward differences with zero beyond the last row/column.

    Output has ``2 rows cols`` entries, ordered per pixel as
    (horizontal, vertical).  The adjoint is the negative discrete divergence;
    ``||D|| <= sqrt 8``.
    """
    r, c = int(rows), int(cols)
    n = r * c

    def apply(x):
        img = x.reshape(r, c)
        out = np.zeros((r, c, 2))
        out[:, :-1, 0] = img[:, 1:] - img[:, :-1]
        out[:-1, :, 1] = img[1:, :] - img[:-1, :]
        return out.ravel()

    def adjoint(y):
        p = y.reshape(r, c, 2)
        ph, pv = p[:, :-1, 0], p[:-1, :, 1]
        out = np.zeros((r, c))
        out[:, :-1] -= ph
        out[:, 1:] += ph
        out[:-1, :] -= pv
        out[1:, :] += pv
        return out.ravel()

    return LinearOperator(apply, adjoint, math.sqrt(8.0), (2 * n, n))


def phantom(rows, cols):
    """Nested-rectangle test image with levels 0, 0.35, 0.7 and 1."""
    img = np.zeros((rows, cols))
    for frac, level in ((1 / 6, 0.35), (1 / 3, 0.7), (5 / 12, 1.0)):
        r0, r1 = int(round(frac * rows)), int(round((1 - frac) * rows))
        c0, c1 = int(round(frac * cols)), int(round((1 - frac) * cols))
        if r1 > r0 and c1 > c0:
            img[r0:r1, c0:c1] = level
    return img.ravel()


@dataclass(eq=False)
class TvInstance:
    """``min ||Ax - b||^2 / 2 + mu ||x||^2 / 2 + eta ||Dx||_{2,1}``.

    The penalty is written as ``max_{y in Y} <eta D x, y>`` over per-pixel unit
    disks.  ``L = lambda_max(A'A) + mu``.
    """

    rows: int
    cols: int
    seed: int
    eta: float
    sigma2: float
    mu: float
    x_true: np.ndarray
    A: np.ndarray
    b: np.ndarray
    L: float
    kind: str = field(default="tv", init=False)

    @property
    def n(self):
        return self.rows * self.cols

    @property
    def m(self):
        return self.A.shape[0]

    @property
    def D(self) -> LinearOperator:
        return finite_difference_operator(self.rows, self.cols)

    @property
    def K(self) -> LinearOperator:
        return self.D.scaled(self.eta)

    @property
    def geometry(self):
        return EUCLIDEAN

    def feasible_set(self):
        return FeasibleSet.whole_space(self.n)

    def x0(self):
        return np.zeros(self.n)

    def f_oracle(self) -> SmoothOracle:
        return least_squares(self.A, self.b, self.mu, self.L, name="data-fit")

    def saddle(self) -> SaddleInstance:
        return SaddleInstance(self.f_oracle(), self.K, FeasibleSet.grouped_balls(self.n),
                              EUCLIDEAN, np.zeros(2 * self.n), self.n / 2.0, name="tv")

    def tv(self, x) -> float:
        g = self.D.apply(np.asarray(x, dtype=float))
        return float(np.sum(np.hypot(g[0::2], g[1::2])))

    def objective(self, x) -> float:
        return self.f_oracle().value(x) + self.eta * self.tv(x)

    def costs(self) -> dict:
        return {"cost_grad_f": 2.0 * self.m, "cost_grad_h": 0.0, "cost_K": 2.0}


def gen_tv(rows, cols, eta=1.0, sigma2=1e-3, seed=0, mu=0.0) -> TvInstance:
    """Phantom image, Bernoulli ``+-1/sqrt(m)`` sensing with ``m = ceil(n/3)``, gaussian noise."""
    rows, cols = int(rows), int(cols)
    if rows < 2 or cols < 2:
        raise DimensionError("image must be at least 2 x 2")
    if mu < 0 or eta < 0 or sigma2 < 0:
        raise DimensionError("eta, sigma2 and mu must be nonnegative")
    n = rows * cols
    m = math.ceil(n / 3)
    rng = _streams(seed, ("A", "noise"))
    A = (2.0 * rng["A"].integers(0, 2, (m, n)) - 1.0) / math.sqrt(m)
    x_true = phantom(rows, cols)
    b = A @ x_true + math.sqrt(sigma2) * rng["noise"].standard_normal(m)
    L = _sq_spectral_norm(A) + mu
    return TvInstance(rows, cols, int(seed), float(eta), float(sigma2), float(mu), x_true, A, b, L)


# -- quadratic -------------------------------------------------------------------


@dataclass(eq=False)
class QuadraticInstance:
    """``f = x'Qf x/2 + c'x`` (spectrum in ``[mu, L]``) plus ``h = x'Qh x/2`` (``||Qh|| = M``)."""

    n: int
    seed: int
    Qf: np.ndarray
    c: np.ndarray
    Qh: np.ndarray
    L: float
    M: float
    mu: float
    set_kind: str = "whole-space"
    kind: str = field(default="quadratic", init=False)

    @property
    def geometry(self):
        return EUCLIDEAN

    def feasible_set(self):
        if self.set_kind == "simplex":
            return FeasibleSet.simplex(self.n)
        return FeasibleSet.whole_space(self.n)

    def x0(self):
        return self.feasible_set().interior_point()

    def f_oracle(self):
        return quadratic(self.Qf, self.c, 0.0, self.L, self.mu, name="f")

    def h_oracle(self):
        return quadratic(self.Qh, None, 0.0, self.M, 0.0, name="h")

    def objective(self, x):
        return self.f_oracle().value(x) + self.h_oracle().value(x)

    def costs(self):
        return {"cost_grad_f": float(self.n) ** 2, "cost_grad_h": float(self.n), "cost_K": 0.0}


def _spectrum_matrix(rng, n, eigs):
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    mat = (Q * eigs) @ Q.T
    return 0.5 * (mat + mat.T)


def gen_quadratic(n, L=1.0, M=100.0, mu=0.1, seed=0, set_kind="whole-space") -> QuadraticInstance:
    """Random QP whose two parts have exact constants ``L``, ``M`` and modulus ``mu``."""
    n = int(n)
    if n < 2:
        raise DimensionError("n must be >= 2")
    if not (L >= mu >= 0 and M > 0 and L > 0):
        raise DimensionError("need L >= mu >= 0 and L, M > 0")
    if set_kind not in ("whole-space", "simplex"):
        raise DimensionError(f"unsupported set {set_kind!r}")
    rng = _streams(seed, ("Qf", "Qh", "c"))
    ef = np.linspace(mu, L, n)
    eh = M * rng["Qh"].uniform(0.0, 1.0, n)
    eh[0] = M
    Qf = _spectrum_matrix(rng["Qf"], n, ef)
    Qh = _spectrum_matrix(rng["Qh"], n, eh)
    c = rng["c"].standard_normal(n)
    return QuadraticInstance(n, int(seed), Qf, c, Qh, float(L), float(M), float(mu), set_kind)


# -- serialization -----------------------------------------------------------------

_ARRAYS = {
    "portfolio": ("b", "A", "B", "C"),
    "tv": ("x_true", "A", "b"),
    "quadratic": ("Qf", "c", "Qh"),
}
_SCALARS = {
    "portfolio": ("n", "m", "seed", "ratio", "d_scale", "eta", "L", "M"),
    "tv": ("rows", "cols", "seed", "eta", "sigma2", "mu", "L"),
    "quadratic": ("n", "seed", "L", "M", "mu", "set_kind"),
}
_TYPES = {"portfolio": PortfolioInstance, "tv": TvInstance, "quadratic": QuadraticInstance}


def _encode(arr):
    arr = np.ascontiguousarray(arr, dtype="<f8")
    out = {"shape": list(arr.shape), "dtype": "float64"}
    if arr.size <= INLINE_LIMIT:
        out["data"] = arr.ravel().tolist()
    else:
        out["base64"] = base64.b64encode(arr.tobytes()).decode("ascii")
    return out


def _decode(entry):
    shape = tuple(entry["shape"])
    if "base64" in entry:
        flat = np.frombuffer(base64.b64decode(entry["base64"]), dtype="<f8").astype(float)
    else:
        flat = np.asarray(entry["data"], dtype=float)
    return flat.reshape(shape)


def instance_to_dict(inst) -> dict:
    """JSON-ready layout: ``schema``, ``kind``, scalar ``params`` and ``arrays``.

    Arrays with at most 10^4 entries are stored as inline lists, larger ones
    as base64 of little-endian float64 bytes.
    """
    kind = inst.kind
    return {
        "schema": SCHEMA,
        "kind": kind,
        "params": {k: getattr(inst, k) for k in _SCALARS[kind]},
        "arrays": {k: _encode(getattr(inst, k)) for k in _ARRAYS[kind]},
    }


def instance_from_dict(data: dict):
    if data.get("schema") != SCHEMA:
        raise ValueError(f"unsupported instance schema {data.get('schema')!r}")
    kind = data.get("kind")
    if kind not in _TYPES:
        raise ValueError(f"unknown instance kind {kind!r}")
    kwargs = dict(data["params"])
    missing = [k for k in _SCALARS[kind] if k not in kwargs]
    if missing:
        raise ValueError(f"instance is missing {missing}")
    for name in _ARRAYS[kind]:
        kwargs[name] = _decode(data["arrays"][name])
    return _TYPES[kind](**kwargs)


def save_instance(inst, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(instance_to_dict(inst), fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_instance(path):
    with open(path, encoding="utf-8") as fh:
        return instance_from_dict(json.load(fh))
