"""
Squaring, multiplication and localized monomials
================================================

The approximants are made of three small ReLU circuits.  This script builds
each of them and looks at what it computes.
"""

import numpy as np

from sobonet import network as nc
from sobonet.constructions import (
    localized_monomial_network,
    multiplication_network,
    partition_function,
    squaring_interpolant,
    squaring_network,
)
from sobonet.evaluation import eval_batch, line_restriction_breakpoints

# %% Squaring by sawtooth composition
# With m levels the network is the piecewise linear interpolant of x^2 on
# the dyadic grid of width 2^-m, so the worst error sits at cell midpoints.
for m in (2, 4, 8):
    net = squaring_network(m)
    mid = (np.arange(2**m) + 0.5) / 2**m
    err = np.abs(nc.realize(net, mid[:, None])[:, 0] - mid**2).max()
    print(f"m={m}: L={net.num_layers} M={net.num_weights} max error {err:.3g} "
          f"(4^-(m+1) = {4.0 ** -(m + 1):.3g})")

x = np.random.default_rng(0).random(5)
print("network equals interpolant:",
      np.allclose(nc.realize(squaring_network(4), x[:, None])[:, 0], squaring_interpolant(4, x)))

# The exact breakpoints along [0, 1] are the interior dyadic points.
print("breakpoints of m=3:", line_restriction_breakpoints(squaring_network(3), [0.0], [1.0], 1.0))

# %% Multiplication via polarization
# xy = 2M^2 (sq(|x+y|/2M) - sq(|x|/2M) - sq(|y|/2M)), and the result is exactly
# zero on the coordinate axes.
for eps in (1e-1, 1e-2, 1e-3):
    net = multiplication_network(5.0, eps)
    X = np.random.default_rng(1).uniform(-5, 5, (10_000, 2))
    v, J, _ = eval_batch(net, X)
    print(f"eps={eps:g}: weights {net.num_weights}, value error "
          f"{np.abs(v[:, 0] - X.prod(axis=1)).max():.2e}, gradient error "
          f"{np.abs(J[:, 0] - X[:, ::-1]).max():.2e}, on axis {nc.realize(net, [0.0, 3.7])[0]}")

# %% A localized monomial phi_m(x) x^alpha
# The partition-of-unity bump around m/N times a monomial, assembled from
# hat networks and a product tree.
N, eps = 4, 1e-3
net = localized_monomial_network((2,), (2,), N, eps)
xs = np.linspace(0, 1, 9)[:, None]
exact = partition_function((2,), N, xs) * xs[:, 0] ** 2
for xv, a, b in zip(xs[:, 0], nc.realize(net, xs)[:, 0], exact):
    print(f"x={xv:.3f}  network {a:.6f}  exact {b:.6f}")
print("counts (L, M, N):", net.counts())
