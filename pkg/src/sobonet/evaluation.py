"""Values, Jacobians and affine pieces of network realizations.

Derivatives use the convention rho'(0) = 0.  The Jacobian is propagated in
forward mode: every state block carries its tangent along each input axis.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg as spla

from .network import DimensionError, Network


class BudgetExceeded(RuntimeError):
    """Raised when a line restriction has more pieces than allowed."""


_STATE_ENTRIES = 2**24


@dataclass(frozen=True)
class EvalResult:
    value: np.ndarray
    jacobian: np.ndarray
    on_kink: bool


def _forward(net: Network, X: np.ndarray, T: np.ndarray, first_bias=None):
    """Propagate points ``X`` (K, d) with tangents ``T`` (r, K, d).

    Returns output values (K, out), output tangents (r, K, out) and, per
    point, whether any hidden pre-activation was exactly zero.
    """
    K = X.shape[0]
    r = T.shape[0]
    width = net.offsets[-2]
    # columns: the K points, then r blocks of K tangents
    state = np.empty((width, K * (1 + r)))
    state[: net.input_dim, :K] = X.T
    for i in range(r):
        state[: net.input_dim, K * (i + 1) : K * (i + 2)] = T[i].T
    kink = np.zeros(K, dtype=bool)
    L = net.num_layers
    for l, layer in enumerate(net.layers, start=1):
        z = layer.csr @ state[: layer.cols]
        z[:, :K] += layer.bias[:, None] if (l > 1 or first_bias is None) else first_bias
        if l < L:
            pre = z[:, :K]
            kink |= (pre == 0).any(axis=0)
            active = pre > 0
            for i in range(r):
                z[:, K * (i + 1) : K * (i + 2)] *= active
            np.maximum(pre, 0.0, out=pre)
            state[net.offsets[l] : net.offsets[l + 1]] = z
    value = z[:, :K].T
    tangents = np.stack([z[:, K * (i + 1) : K * (i + 2)].T for i in range(r)]) if r else None
    return value, tangents, kink


def _as_batch(net: Network, x):
    x = np.asarray(x, dtype=np.float64)
    X = np.atleast_2d(x)
    if X.ndim != 2 or X.shape[1] != net.input_dim:
        raise DimensionError(f"expected input of dimension {net.input_dim}, got shape {x.shape}")
    return x.ndim == 1, X


def eval_with_jacobian(net: Network, x) -> EvalResult:
    """Value and Jacobian (output_dim x input_dim) at a single point."""
    single, X = _as_batch(net, x)
    if not single:
        raise DimensionError("eval_with_jacobian takes a single point; use eval_batch")
    value, J, kink = eval_batch(net, X)
    return EvalResult(value[0], J[0], bool(kink[0]))


def eval_batch(net: Network, X, first_bias=None):
    """Values (K, out), Jacobians (K, out, d) and kink flags (K,) for a batch.

    ``first_bias`` (N_1, K), if given, replaces the first layer's bias with
    one column per point.
    """
    _, X = _as_batch(net, X)
    d = net.input_dim
    K = X.shape[0]
    # keep the state matrix near 2^24 entries
    chunk = max(1, _STATE_ENTRIES // (net.offsets[-2] * (1 + d)))
    if K > chunk:
        parts = [eval_batch(net, X[a : a + chunk],
                            None if first_bias is None else first_bias[:, a : a + chunk])
                 for a in range(0, K, chunk)]
        return tuple(np.concatenate(z) for z in zip(*parts))
    T = np.broadcast_to(np.eye(d)[:, None, :], (d, K, d))
    value, tang, kink = _forward(net, X, T, first_bias)
    # tang[i, k, :] is d(output)/dx_i at point k
    return value, np.transpose(tang, (1, 2, 0)), kink


def value_and_gradient(net: Network, X):
    """Scalar-output helper: values (K,) and gradients (K, d)."""
    if net.output_dim != 1:
        raise DimensionError("value_and_gradient needs a single-output network")
    value, J, _ = eval_batch(net, X)
    return value[:, 0], J[:, 0, :]


def finite_difference_jacobian(net: Network, x, h: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian; at a ReLU kink this averages both slopes."""
    if h <= 0:
        raise ValueError("step h must be positive")
    from .network import realize

    x = np.asarray(x, dtype=np.float64)
    d = net.input_dim
    pts = np.concatenate([x + h * np.eye(d), x - h * np.eye(d)])
    vals = realize(net, pts)
    return ((vals[:d] - vals[d:]) / (2 * h)).T


# --------------------------------------------------------------------------
# restriction to a line
# --------------------------------------------------------------------------


def _line_state(net: Network, x: np.ndarray, v: np.ndarray, rtol: float):
    """Values and right-derivatives along ``v`` of every pre-activation.

    Neurons whose pre-activation is within rounding of zero are resolved by
    the sign of their slope, so the returned pattern is the one valid just
    to the right of ``x``.
    """
    width = net.offsets[-2]
    state = np.empty((width, 2))
    state[: net.input_dim, 0] = x
    state[: net.input_dim, 1] = v
    zs, dzs, tols = [], [], []
    L = net.num_layers
    for l, layer in enumerate(net.layers, start=1):
        z = layer.csr @ state[: layer.cols]
        z[:, 0] += layer.bias
        if l < L:
            scale = abs(layer.csr) @ np.abs(state[: layer.cols, 0]) + np.abs(layer.bias)
            tol = rtol * (1.0 + scale)
            near = np.abs(z[:, 0]) <= tol
            active = (z[:, 0] > tol) | (near & (z[:, 1] > 0))
            zs.append(z[:, 0].copy())
            dzs.append(z[:, 1].copy())
            tols.append(tol)
            z[:, 0] = np.where(active, np.maximum(z[:, 0], 0.0), 0.0)
            z[:, 1] *= active
            state[net.offsets[l] : net.offsets[l + 1]] = z
    out = z[:, 0].copy(), z[:, 1].copy()
    if zs:
        return out, np.concatenate(zs), np.concatenate(dzs), np.concatenate(tols)
    return out, np.zeros(0), np.zeros(0), np.zeros(0)


def _next_crossing(z, dz, tol):
    moving = (np.abs(z) > tol) & (z * dz < 0)
    if not moving.any():
        return np.inf
    return float(np.min(-z[moving] / dz[moving]))


def walk_line(net: Network, x0, v, t_max: float, max_pieces: int = 100_000, rtol: float = 1e-12):
    """Walk the pieces of ``t -> R(x0 + t v)`` on ``[0, t_max]``.

    Returns the start of each piece and the output slope on it.  A new piece
    starts wherever some hidden neuron changes its activation.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if x0.shape != (net.input_dim,) or v.shape != (net.input_dim,):
        raise DimensionError("x0 and v must have length input_dim")
    if not np.linalg.norm(v) > 0:
        raise ValueError("direction v must be nonzero")
    if not t_max > 0:
        raise ValueError("t_max must be positive")
    starts, slopes = [], []
    t = 0.0
    while True:
        (_, slope), z, dz, tol = _line_state(net, x0 + t * v, v, rtol)
        starts.append(t)
        slopes.append(slope)
        if len(starts) > max_pieces:
            raise BudgetExceeded(f"more than {max_pieces} affine pieces on the line")
        step = _next_crossing(z, dz, tol)
        t_next = t + step
        if not t_next < t_max:
            break
        if t_next <= t:
            t_next = np.nextafter(t, np.inf)
        t = t_next
    return np.array(starts), np.array(slopes)


def line_restriction_breakpoints(net: Network, x0, v, t_max: float, max_pieces: int = 100_000):
    """Sorted ``t`` in ``(0, t_max)`` where the restriction changes affine piece.

    Activation changes that leave the output slope unchanged are not
    reported.  Raises :class:`BudgetExceeded` past ``max_pieces`` pieces.
    """
    starts, slopes = walk_line(net, x0, v, t_max, max_pieces)
    if len(starts) < 2:
        return np.zeros(0)
    scale = 1.0 + np.abs(slopes).max(axis=1)
    changed = np.abs(slopes[1:] - slopes[:-1]).max(axis=1) > 1e-9 * np.maximum(scale[1:], scale[:-1])
    return starts[1:][changed]


def first_affine_piece(net: Network, x0, v, t_max: float = np.inf, rtol: float = 1e-12):
    """Length of the first affine piece of ``t -> R(x0 + t v)`` and its slope.

    The length is the first activation change, so the restriction is affine
    on ``[0, length]``; it is capped at ``t_max``.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if not np.linalg.norm(v) > 0:
        raise ValueError("direction v must be nonzero")
    (_, slope), z, dz, tol = _line_state(net, x0, v, rtol)
    return min(_next_crossing(z, dz, tol), t_max), slope


def lipschitz_upper_bound(net: Network) -> float:
    """Crude global Lipschitz bound (Euclidean norms).

    Each hidden layer maps the state ``s`` to ``[s; rho(A s + b)]``, which
    multiplies the bound by ``sqrt(1 + |A|^2)``; Frobenius norms stand in for
    operator norms.
    """
    lip = 1.0
    for l, layer in enumerate(net.layers, start=1):
        a = spla.norm(layer.csr) if layer.csr.nnz else 0.0
        if l < net.num_layers:
            lip *= np.sqrt(1.0 + a * a)
        else:
            lip *= a
    return float(lip)
