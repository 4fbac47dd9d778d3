"""Sampled L^p, W^{1,p} and Slobodeckij norms on the unit cube.

Grids are shifted by irrational offsets so that the dyadic breakpoints of
the constructed networks are never hit.  Sup-norms obtained by sampling are
lower bounds of the true values.
"""
from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass

import numpy as np

from .network import Network

_IRRATIONALS = (np.sqrt(2.0), np.sqrt(3.0), np.sqrt(5.0), np.sqrt(7.0), np.sqrt(11.0))


@dataclass(frozen=True)
class NormReport:
    p: float
    s: float
    value: float
    samples: int
    seed: int
    method: str

    def csv_row(self) -> list:
        return [self.p, self.s, repr(self.value), self.samples, self.seed, self.method]


CSV_HEADER = ["p", "s", "value", "samples", "seed", "method"]


def reports_to_csv(reports) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in reports:
        writer.writerow(r.csv_row())
    return buf.getvalue()


def shifted_grid(resolution: int, d: int = 1, seed: int = 0) -> np.ndarray:
    """About ``resolution`` points of a uniform midpoint-type grid on ``[0,1]^d``.

    Axis ``i`` is offset by the fractional part of ``sqrt(p_i) (seed + 1)``.
    """
    per_axis = max(2, int(round(resolution ** (1.0 / d))))
    axes = []
    for i in range(d):
        shift = (_IRRATIONALS[i % len(_IRRATIONALS)] * (seed + 1)) % 1.0
        axes.append((np.arange(per_axis) + shift) / per_axis)
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def _reduce(values: np.ndarray, p: float) -> float:
    a = np.abs(values)
    if np.isinf(p):
        return float(a.max()) if a.size else 0.0
    return float(np.mean(a**p) ** (1.0 / p))


def lp_norm(g, p: float = np.inf, resolution: int = 100_000, seed: int = 0, d: int = 1) -> NormReport:
    """``||g||_{L^p([0,1]^d)}``: midpoint rule for finite ``p``, grid maximum otherwise."""
    if not p >= 1:
        raise ValueError("p must be >= 1")
    X = shifted_grid(resolution, d, seed)
    return NormReport(p, 0.0, _reduce(np.asarray(g(X)).reshape(len(X), -1), p), len(X), seed, "grid")


def w1p_seminorm(g, grad_g, p: float = np.inf, resolution: int = 100_000, seed: int = 0,
                 d: int = 1) -> NormReport:
    """``|g|_{W^{1,p}}`` from the gradient: max of partials for ``p = inf``, p-sum otherwise.

    ``g`` is unused and accepted so callers can pass a value/gradient pair.
    """
    if not p >= 1:
        raise ValueError("p must be >= 1")
    X = shifted_grid(resolution, d, seed)
    G = np.asarray(grad_g(X)).reshape(len(X), d)
    parts = [_reduce(G[:, i], p) for i in range(d)]
    value = max(parts) if np.isinf(p) else float(np.sum(np.array(parts) ** p) ** (1.0 / p))
    return NormReport(p, 1.0, value, len(X), seed, "grid")


def _lag_ladder(n: int, ratio: float = 1.05) -> np.ndarray:
    lags = np.unique(np.round(ratio ** np.arange(0, np.log(n) / np.log(ratio) + 1)).astype(int))
    return np.unique(np.r_[lags[lags < n], n - 1])


def slobodeckij_seminorm(g, s: float, p: float = np.inf, pairs: int = 100_000, seed: int = 0,
                         d: int = 1) -> NormReport:
    """Fractional seminorm ``|g|_{W^{s,p}}`` on ``[0,1]^d`` for ``0 < s < 1``.

    For ``p = inf`` and ``d = 1`` the Hoelder quotient is maximized over all
    pairs of a shifted grid whose index lag lies on a geometric ladder.  In
    higher dimension pairs are sampled, half near the diagonal and half
    independent.  For finite ``p`` the double integral is a Monte Carlo mean.
    """
    if not 0 < s < 1:
        raise ValueError("s must lie in (0, 1)")
    if not p >= 1:
        raise ValueError("p must be >= 1")
    rng = np.random.default_rng(seed)
    if np.isinf(p) and d == 1:
        n = 64
        while True:
            lags = _lag_ladder(2 * n)
            if np.sum(2 * n - lags) > pairs:
                break
            n *= 2
        lags = _lag_ladder(n)
        X = shifted_grid(n, 1, seed)
        v = np.asarray(g(X)).reshape(n)
        best = 0.0
        used = 0
        for k in lags:
            q = np.abs(v[k:] - v[:-k]).max() / (k / n) ** s
            best = max(best, float(q))
            used += n - k
        return NormReport(p, s, best, int(used), seed, "grid")

    if np.isinf(p):
        half = pairs // 2
        X1 = rng.random((pairs - half, d))
        Y1 = rng.random((pairs - half, d))
        X2 = rng.random((half, d))
        u = rng.normal(size=(half, d))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        r = np.exp(rng.uniform(np.log(1e-4), np.log(0.5), size=(half, 1)))
        Y2 = np.clip(X2 + r * u, 0.0, 1.0)
        X, Y = np.r_[X1, X2], np.r_[Y1, Y2]
        dist = np.linalg.norm(X - Y, axis=1)
        ok = dist > 0
        diff = np.abs(np.asarray(g(X)).ravel() - np.asarray(g(Y)).ravel())
        return NormReport(p, s, float((diff[ok] / dist[ok] ** s).max()), pairs, seed, "monte-carlo")

    X = rng.random((pairs, d))
    Y = rng.random((pairs, d))
    dist = np.linalg.norm(X - Y, axis=1)
    diff = np.abs(np.asarray(g(X)).ravel() - np.asarray(g(Y)).ravel())
    ok = dist > 0
    integrand = diff[ok] ** p / dist[ok] ** (s * p + d)
    return NormReport(p, s, float(np.mean(integrand) ** (1.0 / p)), pairs, seed, "monte-carlo")


def _value_and_grad(obj):
    if isinstance(obj, Network):
        from .evaluation import value_and_gradient

        return lambda X: value_and_gradient(obj, X)
    if hasattr(obj, "value_and_grad"):
        return obj.value_and_grad
    if callable(obj):
        return obj
    raise TypeError("expected a Network or an object with value_and_grad")


class Difference:
    """``a - b`` for two objects exposing ``value_and_grad``."""

    def __init__(self, a, b):
        self._a = _value_and_grad(a)
        self._b = _value_and_grad(b)

    def value_and_grad(self, X):
        va, ga = self._a(X)
        vb, gb = self._b(X)
        return np.ravel(va) - np.ravel(vb), np.reshape(ga, (len(X), -1)) - np.reshape(gb, (len(X), -1))

    def __call__(self, X):
        return self.value_and_grad(X)[0]

    def grad(self, X):
        return self.value_and_grad(X)[1]


def sobolev_error(e: Difference, s: float, p: float, budget: int, seed: int, d: int) -> NormReport:
    if s == 0:
        return lp_norm(e, p, budget, seed, d)
    if s == 1:
        X = shifted_grid(budget, d, seed)
        v, G = e.value_and_grad(X)
        zero = _reduce(v, p)
        parts = [_reduce(G[:, i], p) for i in range(d)]
        if np.isinf(p):
            value = max(zero, *parts)
        else:
            value = float((zero**p + np.sum(np.array(parts) ** p)) ** (1.0 / p))
        return NormReport(p, 1.0, value, len(X), seed, "grid")
    zero = lp_norm(e, p, budget, seed, d)
    frac = slobodeckij_seminorm(e, s, p, budget, seed, d)
    if np.isinf(p):
        value = max(zero.value, frac.value)
    else:
        value = float((zero.value**p + frac.value**p) ** (1.0 / p))
    return NormReport(p, s, value, zero.samples + frac.samples, seed, frac.method)


def wsp_error(net, f, s: float, p: float = np.inf, budget: int = 100_000, seed: int = 0,
              d: int | None = None) -> NormReport:
    """``||R(net) - f||_{W^{s,p}([0,1]^d)}`` for ``s`` in [0, 1].

    ``net`` may be a :class:`Network` or anything with ``value_and_grad``;
    ``f`` must expose ``value_and_grad``.  For ``0 < s < 1`` the Slobodeckij
    seminorm is combined with the ``L^p`` part (maximum when ``p = inf``).
    """
    if not 0 <= s <= 1:
        raise ValueError("s must lie in [0, 1]")
    if d is None:
        d = net.input_dim if isinstance(net, Network) else getattr(f, "d", 1)
    return sobolev_error(Difference(net, f), s, p, budget, seed, d)
