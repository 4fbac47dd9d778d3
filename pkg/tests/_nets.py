"""Random sparse skip networks shared by the tests."""
import numpy as np

from sobonet.network import Network, make_layer


def random_network(rng, d, widths, density=0.5, out=None):
    """Skip network with Gaussian weights on a random sparsity pattern."""
    widths = list(widths)
    if out is not None:
        widths[-1] = out
    layers = []
    cols = d
    for w in widths:
        mask = rng.random((w, cols)) < density
        r, c = np.nonzero(mask)
        bias_mask = rng.random(w) < density
        layers.append(make_layer(w, cols, r, c, rng.normal(size=len(r)),
                                 np.flatnonzero(bias_mask), rng.normal(size=bias_mask.sum())))
        cols += w
    return Network(d, tuple(layers))


def random_shape(rng, d=None, max_depth=4, max_width=5):
    d = d or int(rng.integers(1, 4))
    L = int(rng.integers(1, max_depth + 1))
    return d, [int(rng.integers(1, max_width + 1)) for _ in range(L)]
