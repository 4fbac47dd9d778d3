import numpy as np
import pytest

from sobonet import network as nc
from sobonet.cli import main


def run(capsys, *argv):
    rc = main(list(argv))
    out = capsys.readouterr()
    return rc, out.out, out.err


@pytest.fixture
def square_file(tmp_path, capsys):
    path = tmp_path / "sq.json"
    assert run(capsys, "build-square", "--m", "3", "--out", str(path))[0] == 0
    return path


def test_build_square_and_norms(square_file, capsys):
    net = nc.load(square_file)
    assert net.num_layers == 4
    rc, out, _ = run(capsys, "norms", "--net", str(square_file), "--fn", "square")
    assert rc == 0
    header, row = out.strip().splitlines()
    assert header == "p,s,value,samples,seed,method"
    assert float(row.split(",")[2]) == pytest.approx(2.0**-8, rel=1e-3)
    rc, _, _ = run(capsys, "norms", "--net", str(square_file), "--fn", "square", "--s", "1",
                   "--tol", "1e-6")
    assert rc == 2


def test_eval_identity(tmp_path, capsys):
    path = tmp_path / "id.json"
    nc.save(nc.identity_network(2), path)
    rc, out, _ = run(capsys, "eval", "--net", str(path), "--x", "1,2")
    assert rc == 0 and out.strip() == "1,2"
    rc, _, err = run(capsys, "eval", "--net", str(path), "--x", "1")
    assert rc == 1 and err


def test_usage_errors(tmp_path, capsys):
    assert run(capsys)[0] == 1
    assert run(capsys, "build-square", "--m", "0")[0] == 1
    assert run(capsys, "build-mult", "--M", "0.5", "--eps", "0.1")[0] == 1
    assert run(capsys, "eval", "--net", str(tmp_path / "missing.json"), "--x", "0")[0] == 1
    assert run(capsys, "build-approx", "--fn", "nope", "--n", "3", "--eps", "0.1")[0] == 1
    assert run(capsys, "--threads", "0", "audit", "--net", "x")[0] == 1


def test_build_mult_and_audit(tmp_path, capsys):
    path = tmp_path / "mult.json"
    assert run(capsys, "build-mult", "--M", "2", "--eps", "0.01", "--out", str(path))[0] == 0
    net = nc.load(path)
    assert nc.realize(net, [0.0, 1.5])[0] == 0.0
    rc, out, _ = run(capsys, "audit", "--net", str(path))
    L, M, N = net.counts()
    assert out == f"L,M,N,standard\n{L},{M},{N},0\n"
    std = tmp_path / "std.json"
    assert run(capsys, "to-standard", "--net", str(path), "--out", str(std))[0] == 0
    assert run(capsys, "audit", "--net", str(std))[1].strip().endswith(",1")
    X = np.random.default_rng(0).uniform(-2, 2, (50, 2))
    assert np.allclose(nc.realize(nc.load(std), X), nc.realize(net, X), rtol=1e-9, atol=1e-12)


def test_build_approx(tmp_path, capsys):
    path = tmp_path / "a.json"
    rc, _, err = run(capsys, "build-approx", "--fn", "sin1", "--n", "3", "--eps", "0.1",
                     "--out", str(path))
    assert rc == 0
    assert err.splitlines()[0] == "L,M,N,eps,N_grid,mode,eps_inner,error"
    assert nc.load(path).input_dim == 1


def test_sweep_is_byte_identical(capsys):
    argv = ["--threads", "2", "sweep", "--fn", "sin1", "--n", "3", "--eps-list", "0.1,0.03"]
    rc, first, _ = run(capsys, *argv)
    rc2, second, _ = run(capsys, *argv)
    assert rc == rc2 == 0
    assert first == second
    single = run(capsys, "--threads", "1", *argv[2:])[1]
    assert single == first
    assert len(first.splitlines()) == 3


def test_probe_lb_small(capsys):
    rc, out, _ = run(capsys, "probe-lb", "--N", "2")
    lines = out.strip().splitlines()
    assert rc == 0 and lines[0] == "pattern,ok,margin" and len(lines) == 5
