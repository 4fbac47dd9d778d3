"""Averaged Taylor polynomials and the localized sum ``f_N = sum_m phi_m p_m``.

Integrals against the bump cut-off use Gauss-Legendre rules on the ball
(polar in the plane, tensor on the bounding box from three dimensions on);
the integrand is smooth and vanishes on the sphere, so these converge fast.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .constructions import grid_indices, hat, multi_indices
from .functions import DifferentiableFunction

DOMAIN = (-1.0, 2.0)
_NODE_BUDGET = 2_000_000  # quadrature points evaluated at once


def default_quadrature_order(d: int) -> int:
    return 40 if d <= 2 else 20


def _bump_profile(rho2):
    out = np.zeros_like(rho2)
    inside = rho2 < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - rho2[inside]))
    return out


@lru_cache(maxsize=None)
def _ball_rule(d: int, q: int):
    """Nodes (k, d) and weights of a rule on the unit ball for smooth integrands.

    d = 1: Gauss-Legendre.  d = 2: Gauss-Legendre in the radius times the
    trapezoid rule with 2q angles, which is spectrally accurate for periodic
    integrands.  d >= 3: tensor Gauss-Legendre on the bounding box.
    """
    t, w = np.polynomial.legendre.leggauss(q)
    if d == 2:
        r, wr = 0.5 * (t + 1), 0.5 * w
        theta = 2 * np.pi * np.arange(2 * q) / (2 * q)
        R, T = np.meshgrid(r, theta, indexing="ij")
        nodes = np.stack([(R * np.cos(T)).ravel(), (R * np.sin(T)).ravel()], axis=1)
        weights = (np.outer(wr * r, np.full(2 * q, 2 * np.pi / (2 * q)))).ravel()
        return nodes, weights
    nodes = np.array(list(itertools.product(t, repeat=d)))
    weights = np.prod(np.array(list(itertools.product(w, repeat=d))), axis=1)
    inside = np.sum(nodes**2, axis=1) < 1
    return nodes[inside], weights[inside]


def _unit_bump_mass(d: int, q: int) -> float:
    nodes, weights = _ball_rule(d, q)
    return float(weights @ _bump_profile(np.sum(nodes**2, axis=1)))


def bump_cutoff(center, r: float, q: int | None = None):
    """Normalized bump ``phi(x) ~ exp(-1 / (1 - |x - x0|^2 / r^2))`` on the ball.

    The mass is the quadrature mass for order ``q``, so integrating with the
    same rule returns exactly 1 up to rounding.
    """
    if not r > 0:
        raise ValueError("radius must be positive")
    center = np.atleast_1d(np.asarray(center, dtype=np.float64))
    d = len(center)
    q = q or default_quadrature_order(d)
    mass = _unit_bump_mass(d, q) * r**d

    def phi(X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        return _bump_profile(np.sum((X - center) ** 2, axis=1) / r**2) / mass

    return phi


def _expansion_terms(alphas):
    """For each ``gamma``: list of ``(alpha index, beta, a / alpha!)``.

    ``(x - y)^alpha = sum_{gamma + beta = alpha} C(alpha, gamma) (-1)^{|beta|} x^gamma y^beta``.
    """
    index = {a: k for k, a in enumerate(alphas)}
    terms = []
    for gamma in alphas:
        row = []
        for alpha in alphas:
            if all(a >= g for a, g in zip(alpha, gamma)):
                beta = tuple(a - g for a, g in zip(alpha, gamma))
                coef = 1.0
                for a, g, b in zip(alpha, gamma, beta):
                    coef *= math.comb(a, g) * (-1) ** b / math.factorial(a)
                row.append((index[alpha], beta, coef))
        terms.append(row)
    return terms


def _taylor_from_nodes(f: DifferentiableFunction, n: int, centers: np.ndarray, r: float, q: int):
    """Averaged Taylor coefficients for many balls of common radius.

    Returns ``(alphas, coeffs)`` with ``coeffs[i, k]`` the coefficient of
    ``x^{alphas[k]}`` for the ball around ``centers[i]``.
    """
    P, d = centers.shape
    alphas = multi_indices(d, n - 1)
    unit_nodes, unit_weights = _ball_rule(d, q)
    profile = _bump_profile(np.sum(unit_nodes**2, axis=1))
    weights = unit_weights * profile
    weights = weights / weights.sum()
    keep = weights > 0
    unit_nodes, weights = unit_nodes[keep], weights[keep]
    chunk = max(1, _NODE_BUDGET // len(weights))
    if P > chunk:
        parts = [_taylor_from_nodes(f, n, centers[a : a + chunk], r, q)[1]
                 for a in range(0, P, chunk)]
        return alphas, np.concatenate(parts)
    Y = centers[:, None, :] + r * unit_nodes[None, :, :]  # (P, Q, d)
    flat = Y.reshape(-1, d)
    lo, hi = DOMAIN
    if flat.min() < lo or flat.max() > hi:
        raise ValueError("ball leaves the enlarged domain [-1, 2]^d")
    derivs = {a: f.derivative(a, flat).reshape(P, -1) for a in alphas}
    powers = {}

    def ypow(beta):
        if beta not in powers:
            powers[beta] = np.prod(Y ** np.asarray(beta, dtype=np.float64), axis=2)
        return powers[beta]

    coeffs = np.zeros((P, len(alphas)))
    for k, row in enumerate(_expansion_terms(alphas)):
        for idx, beta, coef in row:
            coeffs[:, k] += coef * ((derivs[alphas[idx]] * ypow(beta)) @ weights)
    return alphas, coeffs


def averaged_taylor_coefficients(f: DifferentiableFunction, n: int, center, r: float,
                                 q: int | None = None) -> dict:
    """Coefficients ``c_gamma`` of ``Q^n f(x) = sum_gamma c_gamma x^gamma`` over ``B_r(center)``."""
    if q is not None and q < 2:
        raise ValueError("quadrature order must be >= 2")
    center = np.atleast_1d(np.asarray(center, dtype=np.float64))
    q = q or default_quadrature_order(len(center))
    alphas, coeffs = _taylor_from_nodes(f, n, center[None, :], float(r), q)
    return dict(zip(alphas, coeffs[0]))


@dataclass(frozen=True)
class PolynomialPatch:
    m: tuple
    coeffs: dict

    def __call__(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        return sum(c * np.prod(X ** np.asarray(a), axis=1) for a, c in self.coeffs.items())


class PatchSet:
    """All patches of one grid, stored as a coefficient array.

    Behaves as a sequence of :class:`PolynomialPatch`.
    """

    def __init__(self, N: int, n: int, d: int, alphas, coeffs: np.ndarray):
        self.N, self.n, self.d = int(N), int(n), int(d)
        self.alphas = [tuple(a) for a in alphas]
        self.ms = grid_indices(d, N)
        self.coeffs = np.asarray(coeffs, dtype=np.float64)
        self._alpha_arr = np.array(self.alphas, dtype=np.float64)

    def __len__(self):
        return len(self.ms)

    def __getitem__(self, i):
        return PolynomialPatch(self.ms[i], dict(zip(self.alphas, self.coeffs[i])))

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def triples(self):
        """``(m, alpha, c)`` for every term, as consumed by the assembler."""
        return [(m, a, float(self.coeffs[i, k]))
                for i, m in enumerate(self.ms) for k, a in enumerate(self.alphas)]

    def flat_index(self, M: np.ndarray) -> np.ndarray:
        return np.ravel_multi_index(tuple(M.T), (self.N + 1,) * self.d)

    def to_dict(self) -> dict:
        return {
            "N": self.N,
            "n": self.n,
            "patches": [
                {"m": list(m), "coeffs": [{"alpha": list(a), "c": float(self.coeffs[i, k])}
                                          for k, a in enumerate(self.alphas)]}
                for i, m in enumerate(self.ms)
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PatchSet":
        patches = data["patches"]
        d = len(patches[0]["m"])
        alphas = [tuple(c["alpha"]) for c in patches[0]["coeffs"]]
        N = int(data["N"])
        order = {tuple(p["m"]): p for p in patches}
        coeffs = np.array([[c["c"] for c in order[m]["coeffs"]] for m in grid_indices(d, N)])
        return cls(N, data["n"], d, alphas, coeffs)


def build_patches(f: DifferentiableFunction, n: int, N: int, p: float = np.inf,
                  q: int | None = None) -> PatchSet:
    """Averaged Taylor polynomials of order ``n`` over ``B_{3/(4N)}(m/N)`` for every ``m``.

    ``p`` does not change the construction; it is accepted for symmetry with
    the error bounds.
    """
    if N < 1 or n < 1:
        raise ValueError("need N >= 1 and n >= 1")
    q = q or default_quadrature_order(f.d)
    centers = np.array(grid_indices(f.d, N), dtype=np.float64) / N
    alphas, coeffs = _taylor_from_nodes(f, n, centers, 0.75 / N, q)
    return PatchSet(N, n, f.d, alphas, coeffs)


def save_patches(patches: PatchSet, path):
    with open(path, "w") as fh:
        json.dump(patches.to_dict(), fh)


def load_patches(path) -> PatchSet:
    with open(path) as fh:
        return PatchSet.from_dict(json.load(fh))


def _hat_slope(t):
    a = np.abs(t)
    return np.where((a > 1) & (a < 2), -np.sign(t), 0.0)


def evaluate_localized_sum(patches: PatchSet, N: int, X, with_grad: bool = False):
    """``f_N(x) = sum_m phi_m(x) p_m(x)`` with closed-form trapezoid products.

    Only the ``2^d`` grid indices around each point can be nonzero.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    K, d = X.shape
    if N != patches.N or d != patches.d:
        raise ValueError("patches were built for a different grid")
    base = np.floor(N * X).astype(np.int64)
    A = patches._alpha_arr  # (J, d)
    mono = np.prod(X[:, None, :] ** A[None], axis=2)  # (K, J)
    value = np.zeros(K)
    grad = np.zeros((K, d))
    for offset in itertools.product((0, 1), repeat=d):
        M = base + np.asarray(offset)
        valid = np.all((M >= 0) & (M <= N), axis=1)
        if not valid.any():
            continue
        Mv = M[valid]
        Xv = X[valid]
        c = patches.coeffs[patches.flat_index(Mv)]  # (k, J)
        t = 3.0 * N * (Xv - Mv / N)
        h = hat(t)
        phi = np.prod(h, axis=1)
        poly = np.sum(c * mono[valid], axis=1)
        value[valid] += phi * poly
        if with_grad:
            hs = 3.0 * N * _hat_slope(t)
            for i in range(d):
                others = np.prod(np.delete(h, i, axis=1), axis=1)
                dphi = hs[:, i] * others
                # d/dx_i x^alpha = alpha_i x^(alpha - e_i)
                Ai = A.copy()
                Ai[:, i] -= 1
                dmono = A[:, i] * np.prod(Xv[:, None, :] ** np.maximum(Ai, 0)[None], axis=2)
                dpoly = np.sum(c * dmono, axis=1)
                grad[valid, i] += dphi * poly + phi * dpoly
    return (value, grad) if with_grad else value


class LocalizedSum:
    """Callable wrapper of ``f_N`` exposing ``value_and_grad``."""

    def __init__(self, patches: PatchSet):
        self.patches = patches

    def value_and_grad(self, X):
        return evaluate_localized_sum(self.patches, self.patches.N, X, with_grad=True)

    def __call__(self, X):
        return evaluate_localized_sum(self.patches, self.patches.N, X)
