"""Analytic target functions with exact partial derivatives."""
from __future__ import annotations

import itertools
from functools import lru_cache

import numpy as np
import sympy


class DifferentiableFunction:
    """Smooth function on ``[-1, 2]^d`` with partial derivatives on demand.

    Parameters
    ----------
    expr : sympy expression in the symbols ``x0, ..., x{d-1}``
    d : input dimension
    n : highest derivative order callers may request for approximation
    name : label used in reports
    derivative : optional callable ``(alpha, X) -> values`` overriding the
        symbolic derivatives (used for piecewise-defined bumps)
    """

    def __init__(self, expr, d: int, n: int = 3, name: str = "f", derivative=None):
        self.expr = expr
        self.d = int(d)
        self.n = int(n)
        self.name = name
        self.symbols = sympy.symbols(f"x0:{self.d}")
        self._custom = derivative
        self._cache = {}

    def _compiled(self, alpha):
        alpha = tuple(int(a) for a in alpha)
        if alpha not in self._cache:
            e = self.expr
            for i, a in enumerate(alpha):
                if a:
                    e = sympy.diff(e, self.symbols[i], a)
            self._cache[alpha] = sympy.lambdify(self.symbols, e, "numpy")
        return self._cache[alpha]

    def derivative(self, alpha, X) -> np.ndarray:
        """``D^alpha f`` at the rows of ``X`` (K, d)."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.d:
            raise ValueError(f"expected points of dimension {self.d}")
        if len(alpha) != self.d:
            raise ValueError("multi-index has the wrong length")
        if self._custom is not None:
            return np.asarray(self._custom(tuple(alpha), X), dtype=np.float64)
        out = self._compiled(alpha)(*X.T)
        return np.broadcast_to(np.asarray(out, dtype=np.float64), (X.shape[0],)).copy()

    def __call__(self, X):
        return self.derivative((0,) * self.d, X)

    def gradient(self, X) -> np.ndarray:
        return np.stack([self.derivative(tuple(np.eye(self.d, dtype=int)[i]), X)
                         for i in range(self.d)], axis=1)

    def value_and_grad(self, X):
        return self(X), self.gradient(X)

    def sobolev_norm(self, k: int, resolution: int = 2001) -> float:
        """Grid estimate of ``max_{|alpha| <= k} sup_{[0,1]^d} |D^alpha f|``."""
        return _grid_norm(self, k, resolution)

    def __repr__(self):
        return f"DifferentiableFunction({self.name}, d={self.d})"


def _grid_norm(f: DifferentiableFunction, k: int, resolution: int) -> float:
    per_axis = max(3, int(round(resolution ** (1.0 / f.d))))
    axis = np.linspace(0.0, 1.0, per_axis)
    X = np.array(list(itertools.product(axis, repeat=f.d)))
    best = 0.0
    for order in range(k + 1):
        for alpha in itertools.product(range(order + 1), repeat=f.d):
            if sum(alpha) == order:
                best = max(best, float(np.abs(f.derivative(alpha, X)).max()))
    return best


def from_expression(text: str, d: int, n: int = 3, name: str | None = None):
    """Build a function from an expression string in ``x0, x1, ...``."""
    syms = sympy.symbols(f"x0:{d}")
    expr = sympy.sympify(text, locals={str(s): s for s in syms})
    return DifferentiableFunction(expr, d, n, name or text)


_REGISTRY = {
    "sin1": ("sin(2*pi*x0)", 1),
    "sin2": ("sin(2*pi*x0)*cos(2*pi*x1)", 2),
    "gaussian-bump": ("exp(-8*(x0 - 1/2)**2)", 1),
    "gaussian-bump2": ("exp(-8*((x0 - 1/2)**2 + (x1 - 1/2)**2))", 2),
    "polynomial": ("1 + x0 - x0**2/2", 1),
    "square": ("x0**2", 1),
    "linear": ("x0", 1),
    "zero": ("0*x0", 1),
}


def registry_names():
    return sorted(_REGISTRY) + ["bump-family"]


@lru_cache(maxsize=None)
def get_function(name: str, n: int = 3) -> DifferentiableFunction:
    """Built-in test function by name; ``sin`` is an alias for ``sin1``."""
    name = {"sin": "sin1"}.get(name, name)
    if name not in _REGISTRY:
        raise KeyError(f"unknown function {name!r}; choose from {registry_names()}")
    text, d = _REGISTRY[name]
    return from_expression(text, d, n, name)
