"""Per-edge strongly convex costs with certified curvature bounds.

Both shipped kinds are members of the family

    f(x) = (a/2) x**2 + c x + s log cosh(x),    a > 0, s >= 0,

so ``f''(x) = a + s sech(x)**2`` lies in ``[a, a + s]``.  ``EdgeCosts`` packs a
list of such models into arrays so that the solvers can work edge-vectorized.
Any other object exposing ``value/grad/hess/inverse_gradient`` and
``alpha/beta`` can be used as a cost; it is then evaluated edge by edge.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from localflow._backend import kernels

INVERSE_GRADIENT_TOL = 1e-12


def _logcosh(x):
    ax = np.abs(x)
    return ax + np.log1p(np.exp(-2.0 * ax)) - math.log(2.0)


def _sech2(x):
    e = np.exp(-2.0 * np.abs(x))
    return 4.0 * e / np.square(1.0 + e)


def _check_finite(x):
    if not np.all(np.isfinite(x)):
        raise ValueError("cost evaluated at a non-finite point")


@dataclass(frozen=True)
class QuadraticCost:
    """``f(x) = (a/2) x**2 + c x``."""

    a: float = 1.0
    c: float = 0.0

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError("quadratic cost needs a > 0")

    kind = "quadratic"

    @property
    def alpha(self):
        return float(self.a)

    @property
    def beta(self):
        return float(self.a)

    @property
    def _abc(self):
        return self.a, 0.0, self.c

    def value(self, x):
        return 0.5 * self.a * np.square(x) + self.c * x

    def grad(self, x):
        return self.a * np.asarray(x, dtype=float) + self.c

    def hess(self, x):
        return np.full_like(np.asarray(x, dtype=float), self.a)

    def inverse_gradient(self, y):
        return (np.asarray(y, dtype=float) - self.c) / self.a

    def to_dict(self):
        return {"kind": "quadratic", "a": self.a, "c": self.c}


@dataclass(frozen=True)
class LogCoshCost:
    """``f(x) = (alpha/2) x**2 + (beta - alpha) log cosh(x)``."""

    alpha: float = 1.0
    beta: float = 2.0

    kind = "logcosh"

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta >= self.alpha):
            raise ValueError("log-cosh cost needs 0 < alpha <= beta")

    @property
    def _abc(self):
        return self.alpha, self.beta - self.alpha, 0.0

    def value(self, x):
        return 0.5 * self.alpha * np.square(x) + (self.beta - self.alpha) * _logcosh(x)

    def grad(self, x):
        return self.alpha * np.asarray(x, dtype=float) + (self.beta - self.alpha) * np.tanh(x)

    def hess(self, x):
        return self.alpha + (self.beta - self.alpha) * _sech2(x)

    def inverse_gradient(self, y):
        out = kernels.inverse_gradient(self.alpha, self.beta - self.alpha,
                                       np.asarray(y, dtype=float), INVERSE_GRADIENT_TOL)
        return out if np.ndim(y) else float(out)

    def to_dict(self):
        return {"kind": "logcosh", "alpha": self.alpha, "beta": self.beta}


def evaluate(cost, x):
    """Return ``(f(x), f'(x), f''(x))``."""
    _check_finite(x)
    return float(cost.value(x)), float(cost.grad(x)), float(cost.hess(x))


def inverse_gradient(cost, y):
    """The unique ``x`` with ``f'(x) = y``."""
    _check_finite(y)
    return float(cost.inverse_gradient(y))


def condition_number(models) -> float:
    """``max beta / min alpha`` over a nonempty list of costs."""
    models = list(models)
    if not models:
        raise ValueError("condition number of an empty cost list")
    return max(m.beta for m in models) / min(m.alpha for m in models)


def cost_from_dict(d: dict):
    kind = d.get("kind")
    if kind == "quadratic":
        return QuadraticCost(float(d.get("a", 1.0)), float(d.get("c", 0.0)))
    if kind == "logcosh":
        return LogCoshCost(float(d["alpha"]), float(d["beta"]))
    raise ValueError(f"unknown cost kind {kind!r}")


class EdgeCosts:
    """Edge-vectorized view of a list of cost models."""

    def __init__(self, models):
        self.models = tuple(models)
        if not self.models:
            raise ValueError("no edge costs")
        self.packed = all(hasattr(m, "_abc") for m in self.models)
        if self.packed:
            abc = np.array([m._abc for m in self.models], dtype=float)
            self.a, self.s, self.c = abc[:, 0], abc[:, 1], abc[:, 2]
            self._has_s = bool(np.any(self.s))
        self.alpha = np.array([m.alpha for m in self.models])
        self.beta = np.array([m.beta for m in self.models])

    def __len__(self):
        return len(self.models)

    def subset(self, idx) -> "EdgeCosts":
        return EdgeCosts([self.models[i] for i in np.asarray(idx, dtype=np.int64)])

    @property
    def condition_number(self) -> float:
        return float(self.beta.max() / self.alpha.min())

    def value(self, x):
        if not self.packed:
            return np.array([m.value(xi) for m, xi in zip(self.models, x)], dtype=float)
        v = 0.5 * self.a * x * x + self.c * x
        if self._has_s:
            v = v + self.s * _logcosh(x)
        return v

    def grad(self, x):
        if not self.packed:
            return np.array([m.grad(xi) for m, xi in zip(self.models, x)], dtype=float)
        g = self.a * x + self.c
        if self._has_s:
            g = g + self.s * np.tanh(x)
        return g

    def hess(self, x):
        if not self.packed:
            return np.array([m.hess(xi) for m, xi in zip(self.models, x)], dtype=float)
        h = self.a + 0.0 * x
        if self._has_s:
            h = h + self.s * _sech2(x)
        return h

    def inverse_gradient(self, y):
        if not self.packed:
            return np.array([m.inverse_gradient(yi) for m, yi in zip(self.models, y)],
                            dtype=float)
        target = y - self.c
        if not self._has_s:
            return target / self.a
        return kernels.inverse_gradient(self.a, self.s, target, INVERSE_GRADIENT_TOL)
