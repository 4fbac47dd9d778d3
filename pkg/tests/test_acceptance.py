"""Release criteria.  Each test prints one PASS/FAIL line and then asserts."""
import time

import numpy as np
import pytest

from _nets import random_network, random_shape
from sobonet.approximator import fit_exponent, scaling_sweep
from sobonet.constructions import multiplication_network, squaring_network
from sobonet.evaluation import eval_batch
from sobonet.functions import get_function
from sobonet.lower_bound import make_family, probe_lower_bound
from sobonet.network import (
    concatenate,
    dumps,
    loads,
    parallelize,
    realize,
    sparse_concatenate,
    to_standard,
)
from sobonet.sobolev import Difference, sobolev_error
from sobonet.taylor import LocalizedSum, build_patches

SQ_TOL = 1e-12
MULT_SAMPLES = 10_000
ZERO_LINE_TOL = 1e-12
B_SPREAD = 0.10  # allowed relative spread of the fitted log-slope of multiplication sizes
REL_TOL = 1e-9
BH_REL = 0.15
BH_GRID = (2, 4, 8, 16, 32)
END_TO_END_EPS = (1e-1, 10**-1.5, 1e-2, 10**-2.5, 1e-3)
EXPONENT_BAND = (0.5, 1.5)
INTERP_SLACK = 3.0
ROUND_TRIPS = 1000


def report(capsys, k, ok, detail):
    with capsys.disabled():
        print(f"\ncriterion {k}: {'PASS' if ok else 'FAIL'} | {detail}")
    assert ok, detail


def test_criterion_1_squaring(capsys):
    t0 = time.perf_counter()
    worst = 0.0
    for m in range(1, 13):
        h = 2.0**-m
        net = squaring_network(m)
        mid = (np.arange(2**m) + 0.5) * h
        err = np.abs(realize(net, mid[:, None])[:, 0] - mid**2).max()
        _, J, _ = eval_batch(net, np.array([[1 - h / 2]]))
        slope = J[0, 0, 0]
        # derivative error on the last segment peaks at its endpoints
        derr = max(abs(slope - 2 * (1 - h)), abs(slope - 2.0))
        worst = max(worst, abs(err - 2.0 ** (-2 - 2 * m)), abs(derr - h))
    elapsed = time.perf_counter() - t0
    ok = worst <= SQ_TOL and elapsed < 1.0
    report(capsys, 1, ok, f"max deviation {worst:.2e}, {elapsed:.2f}s")


def test_criterion_2_multiplication(capsys):
    t0 = time.perf_counter()
    problems = []
    slopes = []
    eps_list = (1e-1, 1e-2, 1e-3)
    for M_box in (1.0, 5.0):
        sizes = []
        for eps in eps_list:
            net = multiplication_network(M_box, eps)
            X = np.random.default_rng(0).uniform(-M_box, M_box, (MULT_SAMPLES, 2))
            v, J, _ = eval_batch(net, X)
            val_err = np.abs(v[:, 0] - X[:, 0] * X[:, 1]).max()
            grad_err = np.abs(J[:, 0, :] - X[:, ::-1]).max()
            t = np.linspace(-M_box, M_box, 101)[:, None]
            z = np.zeros_like(t)
            zero_err = max(np.abs(realize(net, np.hstack([z, t]))).max(),
                           np.abs(realize(net, np.hstack([t, z]))).max())
            if val_err > eps or grad_err > eps or zero_err > ZERO_LINE_TOL:
                problems.append((M_box, eps, val_err, grad_err, zero_err))
            sizes.append(net.num_weights)
        log_inv = np.log2(1 / np.array(eps_list))
        b, a = np.polyfit(log_inv, sizes, 1)
        # with the eps range extended by one decade the fitted b must not move
        ext = [multiplication_network(M_box, e).num_weights for e in eps_list + (1e-4,)]
        b_ext = np.polyfit(np.log2(1 / np.array(eps_list + (1e-4,))), ext, 1)[0]
        slopes += [b, b_ext]
        if np.any(np.array(sizes) > a + b * log_inv + 0.5 * b * np.log2(10)):
            problems.append(("size", M_box, sizes))
    spread = (max(slopes) - min(slopes)) / max(slopes)
    elapsed = time.perf_counter() - t0
    ok = not problems and spread <= B_SPREAD and elapsed < 10
    report(capsys, 2, ok, f"fitted b {np.round(slopes, 1).tolist()} spread {spread:.3f}, "
                          f"violations {problems}, {elapsed:.2f}s")


def test_criterion_3_calculus(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    bad = 0
    for _ in range(200):
        d, widths = random_shape(rng)
        g = random_network(rng, d, widths)
        f = random_network(rng, g.output_dim, random_shape(rng, d=g.output_dim)[1])
        h = random_network(rng, d, random_shape(rng, d=d)[1])
        X = rng.normal(size=(20, d))
        ref = realize(f, realize(g, X))
        tol = REL_TOL * (1 + np.abs(ref))
        fg, sfg = concatenate(f, g), sparse_concatenate(f, g)
        p = parallelize([g, h])
        pref = np.hstack([realize(g, X), realize(h, X)])
        checks = [
            np.all(np.abs(realize(fg, X) - ref) <= tol),
            np.all(np.abs(realize(sfg, X) - ref) <= tol),
            np.all(np.abs(realize(p, X) - pref) <= REL_TOL * (1 + np.abs(pref))),
            fg.num_layers == f.num_layers + g.num_layers - 1,
            sfg.num_layers == f.num_layers + g.num_layers,
            sfg.num_weights <= 2 * f.num_weights + 2 * g.num_weights,
            sfg.num_neurons <= 2 * f.num_neurons + 2 * g.num_neurons,
            p.num_weights == g.num_weights + h.num_weights,
            p.num_neurons == g.num_neurons + h.num_neurons - d,
        ]
        bad += not all(checks)
    elapsed = time.perf_counter() - t0
    report(capsys, 3, bad == 0 and elapsed < 10, f"{bad}/200 pairs failed, {elapsed:.2f}s")


def test_criterion_4_standardization(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    bad = 0
    for _ in range(100):
        d, widths = random_shape(rng)
        net = random_network(rng, d, widths)
        st = to_standard(net)
        X = rng.normal(size=(100, d))
        ref = realize(net, X)
        L, M, N = net.counts()
        ok = (np.all(np.abs(realize(st, X) - ref) <= REL_TOL * (1 + np.abs(ref)))
              and st.is_standard() and st.num_layers == L
              and st.num_neurons <= 2 * L * N and st.num_weights <= 2 * (L * N + M))
        bad += not ok
    elapsed = time.perf_counter() - t0
    report(capsys, 4, bad == 0 and elapsed < 10, f"{bad}/100 networks failed, {elapsed:.2f}s")


def test_criterion_5_bramble_hilbert(capsys):
    t0 = time.perf_counter()
    logN = np.log(BH_GRID)
    lines, ok = [], True
    for name in ("sin1", "sin2"):
        f = get_function(name)
        for n in (2, 3):
            e0, e1 = [], []
            for N in BH_GRID:
                e = Difference(LocalizedSum(build_patches(f, n, N)), f)
                e0.append(sobolev_error(e, 0, np.inf, 20_000, 0, f.d).value)
                e1.append(sobolev_error(e, 1, np.inf, 20_000, 0, f.d).value)
            for s, errs in ((0, e0), (1, e1)):
                slope = np.polyfit(logN, np.log(errs), 1)[0]
                target = -(n - s)
                good = abs(slope - target) <= BH_REL * abs(target)
                ok &= good
                lines.append(f"{name} n={n} s={s}: {slope:.2f} vs {target}{'' if good else ' (miss)'}")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 120
    report(capsys, 5, ok, "; ".join(lines) + f"; {elapsed:.1f}s")


@pytest.fixture(scope="module")
def end_to_end_runs():
    f = get_function("sin1")
    t0 = time.perf_counter()
    runs = {s: scaling_sweep(f, 3, s, END_TO_END_EPS) for s in (0, 1)}
    return f, runs, time.perf_counter() - t0


def test_criterion_6_end_to_end(capsys, end_to_end_runs):
    _, runs, elapsed = end_to_end_runs
    ok, parts = elapsed < 600, []
    for s, rows in runs.items():
        within = all(r["error_target_s"] <= r["eps"] for r in rows)
        expo = fit_exponent([r["eps"] for r in rows], [r["M"] for r in rows], 3, s)
        lo, hi = (c / (3 - s) for c in EXPONENT_BAND)
        ok &= within and lo <= expo <= hi
        parts.append(f"s={s}: errors within eps {within}, exponent {expo:.3f} in "
                     f"[{lo:.3f}, {hi:.3f}], M {[r['M'] for r in rows]}")
    report(capsys, 6, ok, "; ".join(parts) + f"; {elapsed:.1f}s")


def test_criterion_7_interpolation(capsys, end_to_end_runs):
    f, runs, _ = end_to_end_runs
    worst = 0.0
    for rows in runs.values():
        for r in rows:
            e = Difference(r["approximant"], f)
            half = sobolev_error(e, 0.5, np.inf, 20_000, 0, 1).value
            bound = INTERP_SLACK * np.sqrt(r["error_s0"] * r["error_s1"])
            worst = max(worst, half / bound)
    report(capsys, 7, worst <= 1.0, f"max ratio W^(1/2) error / bound = {worst:.3f}")


def test_criterion_8_lower_bound(capsys):
    t0 = time.perf_counter()
    rows, audit = probe_lower_bound(d=1, N=4, n=2, B=1.0)
    elapsed = time.perf_counter() - t0
    decoded = sum(ok for _, ok, _ in rows)
    margin = min(m for _, _, m in rows)
    fam = make_family(1, 2, 4)
    ok = len(rows) == 16 and decoded == 16 and margin > 0 and elapsed < 120
    report(capsys, 8, ok, f"{decoded}/16 decoded, min margin {margin:.3e} "
                          f"(threshold {fam.threshold:.3e}, eps {fam.eps:.3e}, "
                          f"N_grid {audit.N_grid}), {elapsed:.1f}s")


def test_criterion_9_serialization(capsys):
    rng = np.random.default_rng(9)
    nets = [random_network(rng, *random_shape(rng)) for _ in range(ROUND_TRIPS)]
    t0 = time.perf_counter()
    bad = 0
    for net in nets:
        back = loads(dumps(net))
        same = back == net and all(
            np.array_equal(a.values.view(np.int64), b.values.view(np.int64))
            and np.array_equal(a.bias_values.view(np.int64), b.bias_values.view(np.int64))
            for a, b in zip(net.layers, back.layers))
        bad += not same
    elapsed = time.perf_counter() - t0
    report(capsys, 9, bad == 0 and elapsed < 5, f"{bad}/{ROUND_TRIPS} mismatches, {elapsed:.2f}s")
