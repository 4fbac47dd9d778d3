"""
Reading bits back from an approximant
=====================================

Place a small bump at every cell centre whose bit is set.  Any network that
is close to such a function in W^{1,inf} must be steep towards a centre
exactly where the bit is 1, so all 2^(N^d) patterns can be decoded from the
networks alone.  This is the mechanism that forces a lower bound on the
number of weights.
"""

import numpy as np

from sobonet.lower_bound import decode, make_family, probe_lower_bound
from sobonet.network import affine_network

family = make_family(d=1, n=2, N=4, B=1.0)
print("cell centres:", family.points[:, 0])
print(f"bump height {family.scale:.3e}, slope at probe {family.c1 / 4:.3e}, "
      f"threshold {family.threshold:.3e}, accuracy needed {family.eps:.3e}")

# %% A network that is flat everywhere reads as all zeros
bits, margins = decode(affine_network([[0.0]]), family)
print("flat network ->", bits)

# %% All 16 patterns
# The grid density and inner tolerance are calibrated once, so every
# approximant shares one architecture and only the weights differ.
rows, audit = probe_lower_bound(d=1, N=4, n=2)
print(f"shared grid density N_grid = {audit.N_grid}")
for pid, ok, margin in rows:
    print(f"pattern {np.binary_repr(pid, 4)}: decoded {'yes' if ok else 'NO'}, margin {margin:.2e}")
