"""
Approximating a smooth function in a Sobolev norm
=================================================

Build ReLU approximants of sin(2 pi x) that are accurate in L^inf (s=0) and
in W^{1,inf} (s=1), then watch how their size grows as the target accuracy
shrinks.
"""

import numpy as np

from sobonet.approximator import build_approximant, fit_exponent, scaling_sweep, sweep_to_csv
from sobonet.functions import get_function
from sobonet.sobolev import Difference, sobolev_error

f = get_function("sin1")

# %% One approximant
# The error budget is split evenly: the localized Taylor sum f_N must be
# within eps/2 of f, the network within eps/2 of f_N.  Both halves are
# measured, not bounded.
approx = build_approximant(f, 3, s=1, eps=1e-2)
a = approx.audit
print(f"N_grid={a.N_grid}, inner tolerance {a.eps_inner:.2e}")
print(f"errors: Taylor half {a.error_sum:.2e}, network half {a.error_network:.2e}, "
      f"total {a.error:.2e}")
print(f"network: L={a.L}, M={a.M}, N={a.N}")

# The fractional W^{1/2,inf} error is controlled by the two endpoints.
e = Difference(approx, f)
e0, e1, eh = (sobolev_error(e, s, np.inf, 20_000, 0, 1).value for s in (0, 1, 0.5))
print(f"W^(1/2) error {eh:.2e} <= sqrt(L^inf * W^1) = {np.sqrt(e0 * e1):.2e}")

# %% Size against accuracy
# Asking for accuracy in a stronger norm costs more: the grid density grows
# like eps^(-1/(n-s)).  Dividing by log2(1/eps) over-corrects at these
# accuracies, since each network's depth also carries a large constant
# offset; the raw slope of log M is printed alongside.
eps_list = [1e-1, 10**-1.5, 1e-2]
for s in (0, 1):
    rows = scaling_sweep(f, 3, s, eps_list)
    print(f"\ns = {s}")
    print(sweep_to_csv(rows, timing=False), end="")
    print("log-corrected exponent:", round(fit_exponent(eps_list, [r["M"] for r in rows], 3, s), 3),
          "raw:", round(np.polyfit(np.log(1 / np.array(eps_list)),
                                   np.log([r["M"] for r in rows]), 1)[0], 3),
          "target", round(1 / (3 - s), 3))
