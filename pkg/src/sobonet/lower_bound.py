"""Bump families and bit decoding from directional derivatives.

``f_y`` places a scaled smooth bump at every sample point ``x_m`` whose bit
``y_m`` is set.  A network close to ``f_y`` in ``W^{1,inf}`` must have a
large slope towards ``x_m`` exactly where ``y_m = 1``, so the bits can be
read back from the network alone.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import sympy

from .approximator import build_approximant
from .evaluation import first_affine_piece
from .functions import DifferentiableFunction
from .network import Network, realize


@lru_cache(maxsize=None)
def _bump_derivatives(d: int, n: int):
    xs = sympy.symbols(f"z0:{d}")
    r2 = sum(x**2 for x in xs)
    expr = sympy.exp(1 - 1 / (1 - 4 * r2))
    table = {}
    for order in range(n + 1):
        for alpha in itertools.product(range(order + 1), repeat=d):
            if sum(alpha) != order:
                continue
            e = expr
            for i, a in enumerate(alpha):
                if a:
                    e = sympy.diff(e, xs[i], a)
            table[alpha] = sympy.lambdify(xs, e, "numpy")
    return table


def bump(alpha, Z) -> np.ndarray:
    """``D^alpha psi`` with ``psi(z) = exp(1 - 1/(1 - 4|z|^2))`` on ``|z| < 1/2``."""
    Z = np.atleast_2d(np.asarray(Z, dtype=np.float64))
    d = Z.shape[1]
    alpha = tuple(int(a) for a in alpha)
    fn = _bump_derivatives(d, sum(alpha))[alpha]
    out = np.zeros(len(Z))
    inside = np.sum(Z**2, axis=1) < 0.25 * (1 - 1e-12)
    if inside.any():
        out[inside] = np.broadcast_to(fn(*Z[inside].T), (int(inside.sum()),))
    return out


@lru_cache(maxsize=None)
def bump_sobolev_norm(d: int, n: int, resolution: int = 20_001) -> float:
    """``||psi||_{W^{n,inf}}`` over the whole support ball, on a dense grid."""
    per_axis = max(21, int(round(resolution ** (1.0 / d))))
    axis = np.linspace(-0.5, 0.5, per_axis)
    Z = np.array(list(itertools.product(axis, repeat=d)))
    best = 0.0
    for alpha in _bump_derivatives(d, n):
        best = max(best, float(np.abs(bump(alpha, Z)).max()))
    return best


def radial_slope(r: float) -> float:
    """``-d/dr psi`` at radius ``r``: ``psi(r) 8 r / (1 - 4 r^2)^2``."""
    return float(np.exp(1 - 1 / (1 - 4 * r * r)) * 8 * r / (1 - 4 * r * r) ** 2)


@dataclass(frozen=True)
class BumpFamily:
    d: int
    n: int
    N: int
    B: float
    points: np.ndarray  # (N^d, d)
    directions: np.ndarray  # (N^d, d), unit

    @property
    def scale(self) -> float:
        return self.B * self.N ** (-self.n) / bump_sobolev_norm(self.d, self.n)

    @property
    def c1(self) -> float:
        # slope of a unit-pattern bump towards its centre at distance 1/(4N), times N^(n-1)
        return self.B * radial_slope(0.25) / bump_sobolev_norm(self.d, self.n)

    @property
    def probe_points(self) -> np.ndarray:
        return self.points + self.directions / (4 * self.N)

    @property
    def threshold(self) -> float:
        return self.c1 * self.N ** (-(self.n - 1)) / 2

    @property
    def eps(self) -> float:
        """Accuracy at which decoding is guaranteed, with a factor 2 to spare."""
        return self.c1 * self.N ** (-(self.n - 1)) / (6 * np.sqrt(self.d))

    def function(self, y) -> DifferentiableFunction:
        y = np.asarray(y, dtype=np.int64).ravel()
        if len(y) != len(self.points):
            raise ValueError(f"pattern needs {len(self.points)} bits")
        centres = self.points[y != 0]
        scale, N = self.scale, self.N

        def derivative(alpha, X):
            out = np.zeros(len(X))
            factor = scale * N ** sum(alpha)
            for c in centres:
                out += bump(alpha, N * (X - c))
            return factor * out

        pattern = "".join(str(int(b)) for b in y)
        return DifferentiableFunction(None, self.d, self.n, f"bump-family[{pattern}]",
                                      derivative=derivative)


def make_family(d: int, n: int, N: int, B: float = 1.0) -> BumpFamily:
    """Cell centres ``(m + 1/2)/N`` with probe direction ``e_1``.

    Every probe point ``x_m + e_1/(4N)`` stays in the open cell of ``x_m``.
    """
    pts = (np.array(list(itertools.product(range(N), repeat=d)), dtype=np.float64) + 0.5) / N
    dirs = np.zeros_like(pts)
    dirs[:, 0] = 1.0
    return BumpFamily(d, n, N, float(B), pts, dirs)


def bump_family(d: int, n: int, N: int, B: float, y) -> DifferentiableFunction:
    """``f_y(x) = sum_m y_m B N^(-n) / ||psi|| psi(N(x - x_m))``."""
    return make_family(d, n, N, B).function(y)


def decode(net, family: BumpFamily):
    """Bits read from ``net`` and the margins ``|g - threshold|``.

    ``g`` is the difference quotient of the realization from the probe point
    towards ``x_m`` over a step inside the first affine piece.
    """
    if isinstance(net, Network) and (net.input_dim != family.d or net.output_dim != 1):
        raise ValueError("decode needs a single-output network on R^d")
    bits = np.zeros(len(family.points), dtype=np.int64)
    margins = np.zeros(len(family.points))
    cap = 1.0 / (4 * family.N)
    for k, (xt, nu) in enumerate(zip(family.probe_points, family.directions)):
        if not np.linalg.norm(nu) > 0:
            raise ValueError("degenerate probe direction")
        length, _ = first_affine_piece(net, xt, -nu, t_max=cap)
        delta = 0.5 * length
        pts = np.stack([xt - delta * nu, xt])
        vals = realize(net, pts)[:, 0]
        g = (vals[0] - vals[1]) / delta
        bits[k] = int(g > family.threshold)
        margins[k] = abs(g - family.threshold)
    return bits, margins


def all_patterns(k: int):
    return [np.array(bits) for bits in itertools.product((0, 1), repeat=k)]


def probe_lower_bound(d: int = 1, N: int = 4, n: int = 2, B: float = 1.0, patterns=None,
                      budget: int = 20_000, seed: int = 0):
    """Build an approximant for every pattern and decode it.

    The grid density and inner tolerance are calibrated once on the all-ones
    pattern and reused, so all approximants share one architecture.
    Returns rows ``(pattern id, ok, margin)`` and the calibrated audit.
    """
    family = make_family(d, n, N, B)
    K = len(family.points)
    if patterns is None:
        patterns = all_patterns(K)
    ones = family.function(np.ones(K))
    ref = build_approximant(ones, n, s=1, B=B, eps=family.eps, budget=budget, seed=seed,
                            build_network=False)
    rows = []
    for pid, y in enumerate(patterns):
        f = family.function(y)
        approx = build_approximant(f, n, s=1, B=B, eps=family.eps, N_grid=ref.audit.N_grid,
                                   eps_inner=ref.audit.eps_inner, budget=budget, seed=seed,
                                   max_retries=0, check_points=0)
        bits, margins = decode(approx.network, family)
        ok = bool(np.array_equal(bits, np.asarray(y)))
        rows.append((pid, int(ok), float(margins.min())))
    return rows, ref.audit
