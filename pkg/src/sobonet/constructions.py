"""Explicit approximation networks.

Squaring by sawtooth composition, multiplication through the polarization
identity, trapezoid partitions of unity, products of outputs and localized
monomials, and the assembled approximant ``sum c_{m,a} phi_m x^a``.
"""
from __future__ import annotations

import itertools
import math
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .evaluation import eval_batch
from .network import (
    DimensionError,
    Layer,
    Network,
    affine_network,
    concatenate,
    dense_layer,
    make_layer,
    parallelize,
    realize,
    sparse_concatenate,
)

# constant in delta = eps / (6 M^2 C) of the multiplication network
MULT_C = 2.0


def multi_indices(d: int, max_order: int) -> list[tuple[int, ...]]:
    """All ``alpha`` in N^d with ``|alpha| <= max_order``, lexicographic."""
    return [a for a in itertools.product(range(max_order + 1), repeat=d) if sum(a) <= max_order]


def grid_indices(d: int, N: int) -> list[tuple[int, ...]]:
    """All ``m`` in ``{0, ..., N}^d``, lexicographic."""
    return list(itertools.product(range(N + 1), repeat=d))


@lru_cache(maxsize=None)
def squaring_network(m: int) -> Network:
    """Network whose realization interpolates ``x^2`` at ``k / 2^m`` on [0, 1].

    Layer ``s`` holds ``rho(g)``, ``rho(g - 1/2)``, ``rho(g - 1)`` where ``g``
    is the ``(s-1)``-fold composed tent map; the output is
    ``x - sum_s g_s / 4^s``.
    """
    if int(m) != m or m < 1:
        raise ValueError("squaring_network needs an integer m >= 1")
    m = int(m)
    shifts = np.array([0.0, -0.5, -1.0])
    tent = np.array([2.0, -4.0, 2.0])
    layers = [dense_layer(np.ones((3, 1)), shifts)]
    for s in range(2, m + 1):
        cols = 1 + 3 * (s - 1)
        A = np.zeros((3, cols))
        A[:, cols - 3 :] = tent
        layers.append(dense_layer(A, shifts))
    out = np.zeros((1, 1 + 3 * m))
    out[0, 0] = 1.0
    for s in range(1, m + 1):
        out[0, 1 + 3 * (s - 1) : 1 + 3 * s] = -tent / 4.0**s
    layers.append(dense_layer(out))
    return Network(1, tuple(layers))


def squaring_interpolant(m: int, x) -> np.ndarray:
    """Closed form of the piecewise linear interpolant of ``x^2`` with knots ``k/2^m``."""
    x = np.asarray(x, dtype=np.float64)
    h = 2.0**-m
    k = np.clip(np.floor(x / h), 0, 2**m - 1)
    return (2 * k + 1) * h * (x - k * h) + (k * h) ** 2


def abs_network() -> Network:
    """``|x| = rho(x) + rho(-x)``."""
    return Network(1, (dense_layer([[1.0], [-1.0]]), dense_layer([[0.0, 1.0, 1.0]])))


def _scaled_abs(u: Sequence[float], scale: float) -> Network:
    # (x, y) -> |u . (x, y)| * scale
    u = np.asarray(u, dtype=np.float64)
    first = dense_layer(np.stack([u, -u]))
    second = dense_layer([[0.0, 0.0, scale, scale]])
    return Network(len(u), (first, second))


def multiplication_depth(M_box: float, eps: float) -> int:
    """Number of sawtooth levels ``m`` used by :func:`multiplication_network`."""
    delta = eps / (6.0 * M_box**2 * MULT_C)
    return max(1, math.ceil(math.log2(1.0 / delta)))


@lru_cache(maxsize=None)
def multiplication_network(M_box: float, eps: float) -> Network:
    """Approximate ``(x, y) -> x y`` on ``(-M_box, M_box)^2`` in ``W^{1,inf}``.

    Realizes ``2M^2 (sq(|x+y|/2M) - sq(|x|/2M) - sq(|y|/2M))``.  The three
    branches are computed by identical arithmetic, so the output is exactly
    zero on the coordinate axes.
    """
    if not M_box >= 1:
        raise ValueError("M_box must be >= 1")
    if not 0 < eps < 0.5:
        raise ValueError("eps must lie in (0, 1/2)")
    sq = squaring_network(multiplication_depth(M_box, eps))
    scale = 1.0 / (2.0 * M_box)
    branches = [concatenate(sq, _scaled_abs(u, scale)) for u in ((1, 1), (1, 0), (0, 1))]
    combine = affine_network([[2 * M_box**2, -2 * M_box**2, -2 * M_box**2]])
    return sparse_concatenate(combine, parallelize(branches))


def hat_network() -> Network:
    """Trapezoid ``psi``: 1 on [-1, 1], 0 outside [-2, 2], linear in between."""
    first = dense_layer(np.ones((4, 1)), [2.0, 1.0, -1.0, -2.0])
    second = dense_layer([[0.0, 1.0, -1.0, -1.0, 1.0]])
    return Network(1, (first, second))


def hat(x) -> np.ndarray:
    x = np.abs(np.asarray(x, dtype=np.float64))
    return np.clip(2.0 - x, 0.0, 1.0)


@lru_cache(maxsize=None)
def pou_factor_network(m: tuple[int, ...], N: int) -> Network:
    """``d`` outputs, the ``l``-th realizing ``psi(3N(x_l - m_l/N))``."""
    m = tuple(int(v) for v in m)
    d = len(m)
    if N < 1 or any(v < 0 or v > N for v in m):
        raise ValueError(f"grid index {m} not in {{0..{N}}}^{d}")
    psi = hat_network()
    factors = []
    for l in range(d):
        A = np.zeros((1, d))
        A[0, l] = 3.0 * N
        factors.append(sparse_concatenate(psi, affine_network(A, [-3.0 * m[l]])))
    return parallelize(factors)


def partition_function(m, N: int, X) -> np.ndarray:
    """Closed form ``phi_m(x) = prod_l psi(3N(x_l - m_l/N))`` for points ``X`` (K, d)."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    m = np.asarray(m, dtype=np.float64)
    return np.prod(hat(3.0 * N * (X - m / N)), axis=1)


@lru_cache(maxsize=None)
def monomial_factor_network(alpha: tuple[int, ...]) -> Network:
    """One layer listing ``x_i`` exactly ``alpha_i`` times."""
    alpha = tuple(int(a) for a in alpha)
    if sum(alpha) < 1:
        raise ValueError("monomial factor needs |alpha| >= 1")
    cols = [i for i, a in enumerate(alpha) for _ in range(a)]
    k = len(cols)
    return Network(len(alpha), (make_layer(k, len(alpha), np.arange(k), cols, np.ones(k)),))


def _drop_last_output(net: Network) -> Network:
    last = net.layers[-1]
    keep = last.row_idx < last.rows - 1
    bkeep = last.bias_idx < last.rows - 1
    layer = Layer(last.rows - 1, last.cols, last.row_idx[keep], last.col_idx[keep],
                  last.values[keep], last.bias_idx[bkeep], last.bias_values[bkeep])
    return Network(net.input_dim, net.layers[:-1] + (layer,))


def _append_output_row(net: Network, row: Layer) -> Network:
    # row reads a prefix of net's state; it becomes a new last output
    last = net.layers[-1]
    r = last.rows
    layer = make_layer(
        r + 1,
        last.cols,
        np.r_[last.row_idx, row.row_idx + r],
        np.r_[last.col_idx, row.col_idx],
        np.r_[last.values, row.values],
        np.r_[last.bias_idx, row.bias_idx + r],
        np.r_[last.bias_values, row.bias_values],
    )
    return Network(net.input_dim, net.layers[:-1] + (layer,))


def product_of_outputs_network(phi: Network, eps: float, N_bound: float = 1.0,
                               m_max: int | None = None) -> Network:
    """Approximate the product of all outputs of ``phi``.

    The last output is peeled off, the remaining ones are multiplied
    recursively, and the two are joined by a multiplication network with box
    size equal to the current number of factors.  Because ``f . Id . g``
    keeps ``g``'s hidden layers in front, the peeled output row can be
    re-attached to the recursive result without recomputing ``phi``.

    ``N_bound`` only enters the error bound, not the construction.
    """
    if not 0 < eps < 0.5:
        raise ValueError("eps must lie in (0, 1/2)")
    if N_bound < 1:
        raise ValueError("N_bound must be >= 1")
    n = phi.output_dim
    if m_max is not None and n > m_max:
        raise ValueError(f"{n} factors exceed m_max = {m_max}")
    if n == 1:
        return phi
    last = phi.layers[-1]
    keep = last.row_idx == n - 1
    bkeep = last.bias_idx == n - 1
    peeled = Layer(1, last.cols, last.row_idx[keep] * 0, last.col_idx[keep], last.values[keep],
                   last.bias_idx[bkeep] * 0, last.bias_values[bkeep])
    rest = product_of_outputs_network(_drop_last_output(phi), eps, N_bound)
    pair = _append_output_row(rest, peeled)
    return sparse_concatenate(multiplication_network(float(n), eps), pair)


def _direct_localized(m, alpha, N, eps) -> Network:
    factors = pou_factor_network(m, N)
    if sum(alpha) > 0:
        factors = parallelize([factors, monomial_factor_network(alpha)])
    return product_of_outputs_network(factors, eps)


@lru_cache(maxsize=None)
def _localized_template(alpha: tuple[int, ...], N: int, eps: float):
    """Localized monomial for ``m = (1, ..., 1)`` and where ``m`` enters it.

    Only first-layer biases depend on ``m``: the rows computing
    ``+-(3N x_l - 3 m_l)``.  Returns the network, those rows, the coordinate
    ``l`` each row reads and the bias per unit of ``m_l``.
    """
    net = _direct_localized((1,) * len(alpha), alpha, N, eps)
    first = net.layers[0]
    rows = first.bias_idx
    coords = np.array([first.col_idx[first.row_idx == r][0] for r in rows], dtype=np.int64)
    return net, rows, coords, first.bias_values.copy()


@lru_cache(maxsize=None)
def localized_monomial_network(m: tuple[int, ...], alpha: tuple[int, ...], N: int,
                               eps: float) -> Network:
    """Approximation of ``phi_m(x) x^alpha``; exactly zero off ``supp phi_m``.

    Built from the partition factors of ``m`` and the monomial factors of
    ``alpha`` fed to the product network.  All ``m`` share one template whose
    first-layer biases are rescaled.
    """
    m, alpha = tuple(int(v) for v in m), tuple(int(a) for a in alpha)
    if len(m) != len(alpha):
        raise DimensionError("grid index and multi-index differ in dimension")
    if N < 1 or any(v < 0 or v > N for v in m):
        raise ValueError(f"grid index {m} not in {{0..{N}}}^{len(m)}")
    net, rows, coords, unit = _localized_template(alpha, int(N), float(eps))
    bias = unit * np.asarray(m, dtype=np.float64)[coords]
    keep = bias != 0
    first = net.layers[0]
    layer = Layer(first.rows, first.cols, first.row_idx, first.col_idx, first.values,
                  rows[keep], bias[keep])
    return Network(net.input_dim, (layer,) + net.layers[1:])


@lru_cache(maxsize=8)
def _bank(keys: tuple, N: int, eps: float) -> Network:
    return parallelize([localized_monomial_network(m, a, N, eps) for m, a in keys])


def assemble_approximant(patches: Iterable[tuple[Sequence[int], Sequence[int], float]],
                         N: int, eps: float) -> Network:
    """Single-output network realizing ``sum c_{m,a} Psi_{(m,a)}``.

    ``patches`` lists ``(m, alpha, c)`` triples; the terms are ordered
    lexicographically by ``(m, alpha)``.  Zero coefficients keep their
    subnetwork, so the hidden part only depends on the index set, ``N`` and
    ``eps``.
    """
    entries = sorted((tuple(int(v) for v in m), tuple(int(a) for a in alpha), float(c))
                     for m, alpha, c in patches)
    if not entries:
        raise ValueError("no patches to assemble")
    if not all(np.isfinite(c) for _, _, c in entries):
        raise ValueError("coefficients must be finite")
    keys = tuple((m, a) for m, a, _ in entries)
    if len(set(keys)) != len(keys):
        raise ValueError("duplicate (m, alpha) entries")
    bank = _bank(keys, int(N), float(eps))
    coeffs = np.array([c for _, _, c in entries])
    return sparse_concatenate(affine_network(coeffs[None, :]), bank)


class PatchEvaluator:
    """Evaluate ``sum c_k Psi_k`` by running each subnetwork only on its support.

    Gives the same function as the assembled network (up to rounding) at a
    small fraction of the cost, which matters when the assembled network
    has millions of weights.  Terms with zero coefficient are kept so the
    cached tables can be shared between coefficient sets.
    """

    def __init__(self, patches, N: int, eps: float):
        self.entries = sorted((tuple(int(v) for v in m), tuple(int(a) for a in alpha), float(c))
                              for m, alpha, c in patches)
        self.N = int(N)
        self.eps = float(eps)
        self.keys = tuple((m, a) for m, a, _ in self.entries)
        self.coeffs = np.array([c for _, _, c in self.entries])

    def value_and_grad(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        V, G = _term_table(self.keys, self.N, self.eps, X.tobytes(), X.shape)
        c = self.coeffs
        return V @ c, np.stack([g @ c for g in G], axis=1)

    def __call__(self, X):
        return self.value_and_grad(X)[0]


@lru_cache(maxsize=16)
def _term_table(keys, N: int, eps: float, raw: bytes, shape):
    """Sparse tables of every ``Psi_k`` and its partials at fixed points.

    Sampling grids repeat across builds of one architecture, so caching the
    tables turns each further evaluation into a sparse product.  All grid
    indices of one ``alpha`` are evaluated in a single batch by feeding the
    template a per-point first-layer bias.
    """
    X = np.frombuffer(raw, dtype=np.float64).reshape(shape)
    K, d = X.shape
    reach = 2.0 / (3.0 * N)
    size = (N + 1,) * d
    alphas = sorted({a for _, a in keys})
    lookup = {a: np.full((N + 1) ** d, -1, dtype=np.int64) for a in alphas}
    for k, (m, a) in enumerate(keys):
        lookup[a][np.ravel_multi_index(m, size)] = k

    # every (point, m) pair with the point inside supp phi_m
    base = np.floor(N * X).astype(np.int64)
    pts, ms = [], []
    for offset in itertools.product((0, 1), repeat=d):
        M = base + np.asarray(offset)
        ok = np.all((M >= 0) & (M <= N), axis=1)
        ok &= np.all(np.abs(X - M / N) < reach, axis=1)
        pts.append(np.flatnonzero(ok))
        ms.append(M[ok])
    pts, ms = np.concatenate(pts), np.concatenate(ms)
    flat = np.ravel_multi_index(tuple(ms.T), size) if len(ms) else np.zeros(0, dtype=np.int64)

    rows, cols, vals = [], [], []
    grads = [[] for _ in range(d)]
    for a in alphas:
        k = lookup[a][flat]
        sel = k >= 0
        if not sel.any():
            continue
        net, brow, coords, unit = _localized_template(a, N, eps)
        bias = np.zeros((net.layers[0].rows, int(sel.sum())))
        bias[brow] = unit[:, None] * ms[sel][:, coords].T
        v, J, _ = eval_batch(net, X[pts[sel]], first_bias=bias)
        rows.append(pts[sel])
        cols.append(k[sel])
        vals.append(v[:, 0])
        for i in range(d):
            grads[i].append(J[:, 0, i])
    r = np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64)
    c = np.concatenate(cols) if cols else np.zeros(0, dtype=np.int64)

    def table(data):
        data = np.concatenate(data) if data else np.zeros(0)
        return sp.csr_matrix((data, (r, c)), shape=(K, len(keys)))

    return table(vals), [table(g) for g in grads]
