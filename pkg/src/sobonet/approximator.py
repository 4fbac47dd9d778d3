"""End-to-end construction of ``W^{s,inf}`` approximants and complexity sweeps.

The error budget is split in two halves: the localized Taylor sum ``f_N``
must be within ``eps/2`` of ``f``, and the network within ``eps/2`` of
``f_N``.  In calibrated mode both halves are measured rather than bounded.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
import time
from dataclasses import asdict, dataclass, field
from importlib import resources

import numpy as np

from .constructions import PatchEvaluator, assemble_approximant
from .network import Network, architecture_of, has_architecture, realize
from .sobolev import Difference, sobolev_error
from .taylor import LocalizedSum, build_patches


class InfeasibleBudget(RuntimeError):
    """The requested accuracy could not be reached within the retry budget."""


@dataclass
class ComplexityAudit:
    L: int
    M: int
    N: int
    eps: float
    N_grid: int
    mode: str
    eps_inner: float = float("nan")
    error_sum: float = float("nan")
    error_network: float = float("nan")
    error: float = float("nan")

    @classmethod
    def of(cls, net: Network, **kw) -> "ComplexityAudit":
        L, M, N = net.counts()
        return cls(L=L, M=M, N=N, **kw)


# --------------------------------------------------------------------------
# calibration constants
# --------------------------------------------------------------------------


def calibration_path():
    env = os.environ.get("SOBONET_CALIBRATION")
    if env:
        return env
    return str(resources.files("sobonet") / "data" / "calibration.json")


def load_calibration(path=None) -> dict:
    path = path or calibration_path()
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        return {}


def inner_constant(d: int, n: int, path=None) -> float:
    """Calibrated ``C_hat`` for the inner tolerance, 1 if not calibrated."""
    entry = load_calibration(path).get(f"{d},{n}", {})
    return float(entry.get("C_hat", 1.0))


def _measure(obj, f, s, p, budget, seed, d) -> float:
    return sobolev_error(Difference(obj, f), s, p, budget, seed, d).value


# --------------------------------------------------------------------------
# grid density
# --------------------------------------------------------------------------


def theoretical_grid_density(eps: float, n: int, s: float, C_cal: float, B: float) -> int:
    """``ceil((eps / (2 C B))^(-1/(n-s)))``."""
    if not (eps > 0 and C_cal > 0 and B > 0):
        raise ValueError("eps, C_cal and B must be positive")
    # a hair of slack so that eps = 2CB lands on N = 1 despite rounding
    value = (eps / (2.0 * C_cal * B)) ** (-1.0 / (n - s))
    return max(1, math.ceil(value * (1 - 1e-12)))


def select_grid_density(eps: float, n: int, s: float, C_cal: float | None = None, B: float = 1.0,
                        mode: str = "theoretical", f=None, p: float = np.inf,
                        budget: int = 20_000, seed: int = 0, N_max: int = 4096) -> int:
    """Grid density for the localized Taylor sum.

    ``theoretical`` applies the closed formula with constant ``C_cal``.
    ``calibrated`` doubles ``N`` until ``||f - f_N||_{W^{s,p}} <= eps/2`` and
    then bisects the last doubling interval for the smallest passing ``N``,
    treating the error as decreasing inside that interval.
    """
    if mode == "theoretical":
        if C_cal is None:
            raise ValueError("theoretical mode needs an explicit constant C_cal")
        return theoretical_grid_density(eps, n, s, C_cal, B)
    if mode != "calibrated":
        raise ValueError(f"unknown mode {mode!r}")
    if f is None:
        raise ValueError("calibrated mode needs the target function")

    def ok(N):
        patches = build_patches(f, n, N, p)
        return _measure(LocalizedSum(patches), f, s, p, budget, seed, f.d) <= eps / 2

    hi = 1
    while not ok(hi):
        hi *= 2
        if hi > N_max:
            raise InfeasibleBudget(f"no grid density up to {N_max} reaches eps/2 = {eps / 2}")
    lo = hi // 2  # fails (or is 0)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


# --------------------------------------------------------------------------
# approximants
# --------------------------------------------------------------------------


@dataclass
class Approximant:
    """Network approximant with its audit and a fast evaluator of the same function."""

    network: Network
    audit: ComplexityAudit
    patches: object
    evaluator: PatchEvaluator

    def value_and_grad(self, X):
        return self.evaluator.value_and_grad(X)

    def __call__(self, X):
        return self.evaluator(X)

    def __iter__(self):
        return iter((self.network, self.audit))


def build_network_part(patches, eps_inner: float) -> Network:
    return assemble_approximant(patches.triples(), patches.N, eps_inner)


def build_approximant(f, n: int, p: float = np.inf, s: float = 0.0, B: float | None = None,
                      eps: float = 1e-2, mode: str = "calibrated", C_cal: float | None = None,
                      C_hat: float | None = None, N_grid: int | None = None,
                      eps_inner: float | None = None, budget: int = 20_000, seed: int = 0,
                      max_retries: int = 6, build_network: bool = True,
                      check_points: int = 32) -> Approximant:
    """Network ``Phi`` with ``||R(Phi) - f||_{W^{s,p}} <= eps`` (measured).

    ``B`` bounds ``||f||_{W^{n,inf}}``; if omitted it is estimated on a grid.
    A miss of the network half halves the inner tolerance, a miss of the
    Taylor half doubles the grid density, each up to ``max_retries`` times.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    if not 0 <= s <= 1:
        raise ValueError("s must lie in [0, 1]")
    if not eps > 0:
        raise ValueError("eps must be positive")
    d = f.d
    measured_B = f.sobolev_norm(n, resolution=4001 if d == 1 else 40_000)
    if B is None:
        B = measured_B
    elif measured_B > B * (1 + 1e-9):
        raise ValueError(f"||f||_W^(n,inf) ~ {measured_B:.6g} exceeds the bound B = {B}")
    if N_grid is None:
        N_grid = select_grid_density(eps, n, s, C_cal, B, mode, f, p, budget, seed)
    C_hat = inner_constant(d, n) if C_hat is None else C_hat
    if eps_inner is None:
        eps_inner = eps / (2.0 * C_hat * B * N_grid**s)
    eps_inner = min(eps_inner, 0.25)

    for _ in range(max_retries + 1):
        patches = build_patches(f, n, N_grid, p)
        fN = LocalizedSum(patches)
        evaluator = PatchEvaluator(patches.triples(), N_grid, eps_inner)
        err_sum = _measure(fN, f, s, p, budget, seed, d)
        err_net = _measure(evaluator, fN, s, p, budget, seed, d)
        err = _measure(evaluator, f, s, p, budget, seed, d)
        if err <= eps and (mode != "calibrated" or (err_sum <= eps / 2 and err_net <= eps / 2)):
            break
        if err_net > eps / 2:
            eps_inner /= 2
        else:
            N_grid *= 2
    else:
        raise InfeasibleBudget(f"error {err:.3g} above eps = {eps} after {max_retries} retries")

    audit = ComplexityAudit(0, 0, 0, eps, N_grid, mode, eps_inner, err_sum, err_net, err)
    net = None
    if build_network:
        net = build_network_part(patches, eps_inner)
        L, M, N = net.counts()
        audit.L, audit.M, audit.N = L, M, N
        if check_points:
            rng = np.random.default_rng(seed)
            X = rng.random((check_points, d))
            gap = np.abs(realize(net, X)[:, 0] - evaluator(X)).max()
            if gap > 1e-8 * (1 + np.abs(patches.coeffs).max()):
                raise AssertionError(f"fast evaluator disagrees with the network by {gap}")
    return Approximant(net, audit, patches, evaluator)


def architecture_is_shared(patches_a, patches_b, eps_inner: float) -> bool:
    """Both coefficient sets yield networks inside one common architecture.

    The common architecture is the one obtained with all coefficients
    nonzero; zero coefficients only delete weights from it.
    """
    if patches_a.N != patches_b.N or patches_a.alphas != patches_b.alphas:
        return False
    generic = patches_a.triples()
    generic = [(m, a, 1.0) for m, a, _ in generic]
    arch = architecture_of(assemble_approximant(generic, patches_a.N, eps_inner))
    return all(has_architecture(build_network_part(P, eps_inner), arch)
               for P in (patches_a, patches_b))


# --------------------------------------------------------------------------
# sweeps
# --------------------------------------------------------------------------

SWEEP_HEADER = ["eps", "error_s0", "error_s1", "error_target_s", "L", "M", "N", "N_grid", "seconds"]


def scaling_sweep(f, n: int, s: float, eps_list, mode: str = "calibrated", p: float = np.inf,
                  budget: int = 20_000, seed: int = 0, **kw) -> list[dict]:
    """Build approximants for each eps and record errors and exact sizes."""
    rows = []
    for eps in eps_list:
        t0 = time.perf_counter()
        approx = build_approximant(f, n, p=p, s=s, eps=eps, mode=mode, budget=budget,
                                   seed=seed, **kw)
        e = Difference(approx, f)
        err0 = sobolev_error(e, 0, p, budget, seed, f.d).value
        err1 = sobolev_error(e, 1, p, budget, seed, f.d).value
        a = approx.audit
        rows.append(dict(eps=eps, error_s0=err0, error_s1=err1, error_target_s=a.error,
                         L=a.L, M=a.M, N=a.N, N_grid=a.N_grid,
                         seconds=time.perf_counter() - t0, approximant=approx))
    return rows


def sweep_to_csv(rows, timing: bool = True) -> str:
    """CSV text; with ``timing=False`` the seconds column is left blank so
    repeated runs give identical bytes."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SWEEP_HEADER)
    for r in rows:
        writer.writerow([repr(r["eps"]), repr(r["error_s0"]), repr(r["error_s1"]),
                         repr(r["error_target_s"]), r["L"], r["M"], r["N"], r["N_grid"],
                         f"{r['seconds']:.3f}" if timing else ""])
    return buf.getvalue()


def fit_exponent(eps_list, M_list, n: int, s: float) -> float:
    """Least-squares slope of ``log(M / log2(eps^(-n/(n-s))))`` against ``log(1/eps)``."""
    eps = np.asarray(eps_list, dtype=np.float64)
    M = np.asarray(M_list, dtype=np.float64)
    log_factor = np.log2(eps ** (-n / (n - s)))
    return float(np.polyfit(np.log(1.0 / eps), np.log(M / log_factor), 1)[0])


def calibrate_inner_constant(f, n: int, eps: float = 1e-1, s_values=(0.0, 1.0),
                             budget: int = 20_000, seed: int = 0, safety: float = 2.0) -> float:
    """Measured ``C_hat`` for ``(f.d, n)``.

    With ``C_hat = 1`` the network half of the error is measured for every
    ``s`` in ``s_values``; the constant is ``safety`` times the largest ratio
    of that error to its budget ``eps/2``.  Since the network error is at
    most linear in the inner tolerance, the network half then keeps a factor
    ``safety`` in reserve.
    """
    ratio = 0.0
    for s in s_values:
        approx = build_approximant(f, n, s=s, eps=eps, C_hat=1.0, budget=budget, seed=seed,
                                   max_retries=0, build_network=False)
        ratio = max(ratio, approx.audit.error_network / (eps / 2))
    if not ratio > 0:
        return 1.0
    return float(min(1.0, safety * ratio))
