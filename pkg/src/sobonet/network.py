"""Skip-connection ReLU networks and their calculus.

A network with input dimension ``d`` is a tuple of layers ``(A_l, b_l)``.
Layer ``l`` reads the concatenated state ``[x_0; x_1; ...; x_{l-1}]``, so its
matrix has ``d + N_1 + ... + N_{l-1}`` columns.  Hidden layers apply the ReLU,
the output layer is affine.

Matrices are stored as sorted coordinate triplets without explicit zeros, so
``num_weights`` is the exact count of nonzero entries.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp


class DimensionError(ValueError):
    """Raised when shapes of networks or inputs are incompatible."""


@dataclass(frozen=True, eq=False)
class Layer:
    """One ``(A_l, b_l)`` pair in coordinate form.

    Entries are kept in row-major order with zeros removed; use
    :func:`make_layer` rather than the constructor to get that normal form.
    """

    rows: int
    cols: int
    row_idx: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray
    bias_idx: np.ndarray
    bias_values: np.ndarray

    @property
    def nnz(self) -> int:
        return len(self.values) + len(self.bias_values)

    @cached_property
    def csr(self) -> sp.csr_matrix:
        mat = sp.csr_matrix(
            (self.values, (self.row_idx, self.col_idx)), shape=(self.rows, self.cols)
        )
        mat.sort_indices()
        return mat

    @cached_property
    def bias(self) -> np.ndarray:
        b = np.zeros(self.rows)
        b[self.bias_idx] = self.bias_values
        return b

    def block(self, start: int, stop: int) -> sp.csr_matrix:
        """Columns ``start:stop`` of the weight matrix."""
        return self.csr[:, start:stop]

    def __eq__(self, other):
        if not isinstance(other, Layer):
            return NotImplemented
        return (
            self.rows == other.rows
            and self.cols == other.cols
            and np.array_equal(self.row_idx, other.row_idx)
            and np.array_equal(self.col_idx, other.col_idx)
            and np.array_equal(self.values, other.values)
            and np.array_equal(self.bias_idx, other.bias_idx)
            and np.array_equal(self.bias_values, other.bias_values)
        )

    __hash__ = None


def make_layer(rows, cols, row_idx=(), col_idx=(), values=(), bias_idx=(), bias_values=()):
    """Build a :class:`Layer` in normal form.

    Duplicate coordinates are summed, zeros are dropped and the remaining
    entries are sorted row-major.
    """
    rows, cols = int(rows), int(cols)
    if rows < 1 or cols < 1:
        raise DimensionError(f"layer shape must be positive, got {rows}x{cols}")
    r = np.asarray(row_idx, dtype=np.int64).ravel()
    c = np.asarray(col_idx, dtype=np.int64).ravel()
    v = np.asarray(values, dtype=np.float64).ravel()
    if not (len(r) == len(c) == len(v)):
        raise DimensionError("triplet arrays differ in length")
    if len(r) and (r.min() < 0 or r.max() >= rows or c.min() < 0 or c.max() >= cols):
        raise DimensionError("triplet index out of range")
    key = r * cols + c
    order = np.argsort(key, kind="stable")
    key, v = key[order], v[order]
    if len(key) > 1 and np.any(key[1:] == key[:-1]):
        key, inv = np.unique(key, return_inverse=True)
        v = np.bincount(inv, weights=v, minlength=len(key))
    keep = v != 0
    key, v = key[keep], v[keep]

    bi = np.asarray(bias_idx, dtype=np.int64).ravel()
    bv = np.asarray(bias_values, dtype=np.float64).ravel()
    if len(bi) != len(bv):
        raise DimensionError("bias arrays differ in length")
    if len(bi) and (bi.min() < 0 or bi.max() >= rows):
        raise DimensionError("bias index out of range")
    order = np.argsort(bi, kind="stable")
    bi, bv = bi[order], bv[order]
    if len(bi) > 1 and np.any(bi[1:] == bi[:-1]):
        bi, inv = np.unique(bi, return_inverse=True)
        bv = np.bincount(inv, weights=bv, minlength=len(bi))
    keep = bv != 0
    return Layer(rows, cols, key // cols, key % cols, v.copy(), bi[keep], bv[keep].copy())


def layer_from_sparse(mat, bias=None) -> Layer:
    """Convert a scipy sparse (or dense) matrix plus dense bias into a layer."""
    coo = sp.coo_matrix(mat)
    rows, cols = coo.shape
    if bias is None:
        bi, bv = (), ()
    else:
        bias = np.asarray(bias, dtype=np.float64).ravel()
        if len(bias) != rows:
            raise DimensionError("bias length does not match matrix rows")
        bi = np.flatnonzero(bias)
        bv = bias[bi]
    return make_layer(rows, cols, coo.row, coo.col, coo.data, bi, bv)


def dense_layer(A, b=None) -> Layer:
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    return layer_from_sparse(sp.coo_matrix(A), b)


@dataclass(frozen=True, eq=False)
class Network:
    """Immutable skip-connection network."""

    input_dim: int
    layers: tuple[Layer, ...]

    def __post_init__(self):
        if self.input_dim < 1:
            raise DimensionError("input_dim must be positive")
        if len(self.layers) < 1:
            raise DimensionError("a network needs at least one layer")
        expected = self.input_dim
        for l, layer in enumerate(self.layers, start=1):
            if layer.cols != expected:
                raise DimensionError(
                    f"layer {l} has {layer.cols} columns, expected {expected}"
                )
            expected += layer.rows
        object.__setattr__(self, "layers", tuple(self.layers))

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    @property
    def widths(self) -> tuple[int, ...]:
        """``(N_1, ..., N_L)``."""
        return tuple(layer.rows for layer in self.layers)

    @property
    def output_dim(self) -> int:
        return self.layers[-1].rows

    @property
    def num_weights(self) -> int:
        return sum(layer.nnz for layer in self.layers)

    @property
    def num_neurons(self) -> int:
        return self.input_dim + sum(self.widths)

    @cached_property
    def offsets(self) -> np.ndarray:
        """Column offset of each state block: ``offsets[k]`` starts ``x_k``."""
        return np.concatenate([[0], np.cumsum([self.input_dim, *self.widths])]).astype(np.int64)

    def counts(self) -> tuple[int, int, int]:
        """``(L, M, N)``."""
        return self.num_layers, self.num_weights, self.num_neurons

    def is_standard(self) -> bool:
        """True when every layer reads only the immediately preceding block."""
        for l, layer in enumerate(self.layers, start=1):
            if len(layer.col_idx) and layer.col_idx.min() < self.offsets[l - 1]:
                return False
        return True

    def __call__(self, x):
        return realize(self, x)

    def __eq__(self, other):
        if not isinstance(other, Network):
            return NotImplemented
        return self.input_dim == other.input_dim and self.layers == other.layers

    __hash__ = None

    def __repr__(self):
        L, M, N = self.counts()
        return f"Network(d={self.input_dim}, out={self.output_dim}, L={L}, M={M}, N={N})"


def realize(net: Network, x) -> np.ndarray:
    """Evaluate the ReLU realization.

    ``x`` may be a single point of length ``d`` or a batch of shape ``(K, d)``;
    the result has shape ``(N_L,)`` or ``(K, N_L)`` accordingly.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    if X.ndim != 2 or X.shape[1] != net.input_dim:
        raise DimensionError(f"expected input of dimension {net.input_dim}, got shape {x.shape}")
    chunk = max(1, 2**24 // net.offsets[-2])
    if X.shape[0] > chunk:
        out = np.concatenate([realize(net, X[a : a + chunk]) for a in range(0, X.shape[0], chunk)])
        return out
    state = np.empty((net.offsets[-2], X.shape[0]))
    state[: net.input_dim] = X.T
    for l, layer in enumerate(net.layers, start=1):
        z = layer.csr @ state[: layer.cols] + layer.bias[:, None]
        if l < net.num_layers:
            np.maximum(z, 0.0, out=z)
            state[net.offsets[l] : net.offsets[l + 1]] = z
    out = z.T
    return out[0] if single else out


# --------------------------------------------------------------------------
# elementary networks
# --------------------------------------------------------------------------


def affine_network(A, b=None) -> Network:
    """One-layer network ``x -> A x + b``."""
    layer = dense_layer(A, b)
    return Network(layer.cols, (layer,))


def identity_network(d: int) -> Network:
    """Two-layer network ``((I; -I), 0), ((0 | I | -I), 0)`` realizing the identity."""
    if d < 1:
        raise DimensionError("identity network needs d >= 1")
    eye = np.arange(d)
    first = make_layer(2 * d, d, np.r_[eye, eye + d], np.r_[eye, eye], np.r_[np.ones(d), -np.ones(d)])
    second = make_layer(
        d, 3 * d, np.r_[eye, eye], np.r_[eye + d, eye + 2 * d], np.r_[np.ones(d), -np.ones(d)]
    )
    return Network(d, (first, second))


# --------------------------------------------------------------------------
# calculus
# --------------------------------------------------------------------------


def concatenate(f: Network, g: Network) -> Network:
    """Network realizing ``f o g`` with ``L_f + L_g - 1`` layers.

    The output layer of ``g`` is merged into every block of ``f`` that reads
    ``f``'s input.
    """
    if f.input_dim != g.output_dim:
        raise DimensionError(
            f"cannot compose: f expects {f.input_dim} inputs, g has {g.output_dim} outputs"
        )
    g_last = g.layers[-1]
    g_state = g_last.cols
    k = f.input_dim
    new_layers = list(g.layers[:-1])
    for layer in f.layers:
        inner = layer.block(0, k)
        merged = (inner @ g_last.csr).tocoo()
        rest = layer.block(k, layer.cols).tocoo()
        bias = layer.bias + inner @ g_last.bias
        new_layers.append(
            make_layer(
                layer.rows,
                g_state + layer.cols - k,
                np.r_[merged.row, rest.row],
                np.r_[merged.col, rest.col + g_state],
                np.r_[merged.data, rest.data],
                np.flatnonzero(bias),
                bias[bias != 0],
            )
        )
    return Network(g.input_dim, tuple(new_layers))


def sparse_concatenate(f: Network, g: Network) -> Network:
    """``f . Id . g``: composition with ``L_f + L_g`` layers and at most twice the weights."""
    if f.input_dim != g.output_dim:
        raise DimensionError(
            f"cannot compose: f expects {f.input_dim} inputs, g has {g.output_dim} outputs"
        )
    return concatenate(concatenate(f, identity_network(g.output_dim)), g)


def parallelize(nets: Sequence[Network]) -> Network:
    """Stack networks sharing an input; outputs are concatenated in order.

    Hidden layer ``l`` holds the layer-``l`` neurons of every net deeper than
    ``l``; each net's output rows go to the last layer and keep reading their
    own hidden blocks through skip connections.
    """
    nets = list(nets)
    if not nets:
        raise ValueError("parallelize needs at least one network")
    d = nets[0].input_dim
    if any(net.input_dim != d for net in nets):
        raise DimensionError("all networks must share the input dimension")
    if len(nets) == 1:
        return nets[0]
    L = max(net.num_layers for net in nets)

    # width of result layer l and the row offset of each net inside it
    row_off = np.zeros((len(nets), L + 1), dtype=np.int64)
    widths = np.zeros(L + 1, dtype=np.int64)
    for i, net in enumerate(nets):
        for l in range(1, net.num_layers):
            row_off[i, l] = widths[l]
            widths[l] += net.widths[l - 1]
        row_off[i, L] = widths[L]
        widths[L] += net.output_dim
    offsets = np.concatenate([[0, d], d + np.cumsum(widths[1:])])

    rows, cols, vals, brow, bval = ([[] for _ in range(L + 1)] for _ in range(5))
    for i, net in enumerate(nets):
        # map each column of net i's state to the combined state
        colmap = [np.arange(d)]
        for l in range(1, net.num_layers):
            start = offsets[l] + row_off[i, l]
            colmap.append(np.arange(start, start + net.widths[l - 1]))
        colmap = np.concatenate(colmap)
        for l, layer in enumerate(net.layers, start=1):
            target = l if l < net.num_layers else L
            rows[target].append(layer.row_idx + row_off[i, target])
            cols[target].append(colmap[layer.col_idx])
            vals[target].append(layer.values)
            brow[target].append(layer.bias_idx + row_off[i, target])
            bval[target].append(layer.bias_values)
    layers = []
    for l in range(1, L + 1):
        layers.append(
            _layer_presorted(
                widths[l],
                offsets[l],
                np.concatenate(rows[l]),
                np.concatenate(cols[l]),
                np.concatenate(vals[l]),
                np.concatenate(brow[l]),
                np.concatenate(bval[l]),
            )
        )
    return Network(d, tuple(layers))


def _layer_presorted(rows, cols, r, c, v, bi, bv) -> Layer:
    # entries come from distinct nonzero triplets; only ordering is needed
    order = np.lexsort((c, r))
    border = np.argsort(bi, kind="stable")
    return Layer(int(rows), int(cols), r[order], c[order], v[order], bi[border], bv[border])


def to_standard(net: Network) -> Network:
    """Equivalent network without skip connections.

    Each hidden layer carries ``rho(x_0)``, ``rho(-x_0)`` and copies of all
    earlier activations forward, so later layers only read their predecessor.
    """
    L, d = net.num_layers, net.input_dim
    if L == 1:
        return net
    off = net.offsets
    layers = []
    prev_width = d
    for l, layer in enumerate(net.layers, start=1):
        coo = layer.csr.tocoo()
        r, c, v = coo.row, coo.col, coo.data
        from_input = c < d
        if l == 1:
            eye = np.arange(d)
            rr = [eye, eye + d, r + 2 * d]
            cc = [eye, eye, c]
            vv = [np.ones(d), -np.ones(d), v]
            width = 2 * d + layer.rows
            new = make_layer(width, prev_width, np.concatenate(rr), np.concatenate(cc),
                             np.concatenate(vv), layer.bias_idx + 2 * d, layer.bias_values)
        else:
            # previous standard layer: [rho(x0), rho(-x0), x_1, ..., x_{l-1}]
            carried = prev_width
            if l < L:
                head = np.arange(carried)
                base = carried
                width = carried + layer.rows
                rr, cc, vv = [head], [head], [np.ones(carried)]
            else:
                base = 0
                width = layer.rows
                rr, cc, vv = [], [], []
            rr += [r[from_input] + base, r[from_input] + base, r[~from_input] + base]
            cc += [c[from_input], c[from_input] + d, c[~from_input] + d]
            vv += [v[from_input], -v[from_input], v[~from_input]]
            new = make_layer(width, prev_width, np.concatenate(rr), np.concatenate(cc),
                             np.concatenate(vv), layer.bias_idx + base, layer.bias_values)
        layers.append(new)
        prev_width = new.rows
    return _pad_standard(d, layers)


def _pad_standard(d: int, layers: list[Layer]) -> Network:
    # lift each layer (which reads only its predecessor) to full skip width
    out = []
    offset = 0
    prev = d
    for layer in layers:
        out.append(Layer(layer.rows, offset + prev, layer.row_idx, layer.col_idx + offset,
                         layer.values, layer.bias_idx, layer.bias_values))
        offset += prev
        prev = layer.rows
    return Network(d, tuple(out))


# --------------------------------------------------------------------------
# architectures
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Architecture:
    """Binary sparsity mask plus widths.

    The weight ordering is fixed as: layer by layer, matrix entries in
    row-major order followed by bias entries in ascending row order.
    """

    mask: Network

    @property
    def input_dim(self) -> int:
        return self.mask.input_dim

    @property
    def widths(self):
        return self.mask.widths

    @property
    def num_weights(self) -> int:
        return self.mask.num_weights

    @property
    def num_layers(self) -> int:
        return self.mask.num_layers

    @property
    def num_neurons(self) -> int:
        return self.mask.num_neurons

    def __eq__(self, other):
        if not isinstance(other, Architecture):
            return NotImplemented
        return self.mask == other.mask

    __hash__ = None


def architecture_of(net: Network) -> Architecture:
    layers = tuple(
        Layer(l.rows, l.cols, l.row_idx, l.col_idx, np.ones(len(l.values)),
              l.bias_idx, np.ones(len(l.bias_values)))
        for l in net.layers
    )
    return Architecture(Network(net.input_dim, layers))


def weights_of(net: Network) -> np.ndarray:
    """Nonzero weights in the canonical architecture ordering."""
    parts = []
    for layer in net.layers:
        parts.extend([layer.values, layer.bias_values])
    return np.concatenate(parts) if parts else np.zeros(0)


def has_architecture(net: Network, arch: Architecture) -> bool:
    if net.input_dim != arch.input_dim or net.widths != arch.widths:
        return False
    for layer, mask in zip(net.layers, arch.mask.layers):
        if not np.isin(layer.row_idx * layer.cols + layer.col_idx,
                       mask.row_idx * mask.cols + mask.col_idx).all():
            return False
        if not np.isin(layer.bias_idx, mask.bias_idx).all():
            return False
    return True


def instantiate(arch: Architecture, w) -> Network:
    """Network with architecture ``arch`` whose nonzero slots carry ``w``."""
    w = np.asarray(w, dtype=np.float64).ravel()
    if len(w) != arch.num_weights:
        raise DimensionError(f"weight vector has length {len(w)}, expected {arch.num_weights}")
    layers = []
    pos = 0
    for mask in arch.mask.layers:
        nv, nb = len(mask.values), len(mask.bias_values)
        v = w[pos : pos + nv]
        b = w[pos + nv : pos + nv + nb]
        pos += nv + nb
        keep, bkeep = v != 0, b != 0
        layers.append(Layer(mask.rows, mask.cols, mask.row_idx[keep], mask.col_idx[keep],
                            v[keep].copy(), mask.bias_idx[bkeep], b[bkeep].copy()))
    return Network(arch.input_dim, tuple(layers))


# --------------------------------------------------------------------------
# serialization
# --------------------------------------------------------------------------


def network_to_dict(net: Network) -> dict:
    return {
        "input_dim": net.input_dim,
        "layers": [
            {
                "rows": layer.rows,
                "cols": layer.cols,
                "triplets": [[int(i), int(j), float(v)] for i, j, v in
                             zip(layer.row_idx, layer.col_idx, layer.values)],
                "bias": [[int(i), float(v)] for i, v in zip(layer.bias_idx, layer.bias_values)],
            }
            for layer in net.layers
        ],
    }


def network_from_dict(data: dict) -> Network:
    layers = []
    for entry in data["layers"]:
        trip = entry.get("triplets", [])
        bias = entry.get("bias", [])
        r = [t[0] for t in trip]
        c = [t[1] for t in trip]
        v = [t[2] for t in trip]
        layers.append(make_layer(entry["rows"], entry["cols"], r, c, v,
                                 [b[0] for b in bias], [b[1] for b in bias]))
    return Network(int(data["input_dim"]), tuple(layers))


def dumps(obj: Network | Architecture) -> str:
    net = obj.mask if isinstance(obj, Architecture) else obj
    return json.dumps(network_to_dict(net))


def loads(text: str) -> Network:
    return network_from_dict(json.loads(text))


def save(obj: Network | Architecture, path) -> None:
    with open(path, "w") as fh:
        fh.write(dumps(obj))


def load(path) -> Network:
    with open(path) as fh:
        return loads(fh.read())


def load_architecture(path) -> Architecture:
    return architecture_of(load(path))
