import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from _nets import random_network, random_shape
from sobonet.constructions import squaring_network
from sobonet.evaluation import lipschitz_upper_bound
from sobonet.network import (
    DimensionError,
    Network,
    affine_network,
    architecture_of,
    concatenate,
    dense_layer,
    dumps,
    has_architecture,
    identity_network,
    instantiate,
    loads,
    make_layer,
    parallelize,
    realize,
    sparse_concatenate,
    to_standard,
    weights_of,
)


def test_identity_realization():
    assert np.array_equal(realize(identity_network(3), [1.0, -2.0, 0.5]), [1.0, -2.0, 0.5])
    assert realize(identity_network(1), [-5.0])[0] == -5.0
    assert np.array_equal(realize(identity_network(3), np.zeros(3)), np.zeros(3))


def test_identity_counts():
    # 2d + 2d nonzeros; neurons d + 2d + d
    net = identity_network(2)
    assert net.num_weights == 8
    assert net.num_neurons == 8
    assert net.widths == (4, 2)


def test_identity_matrices():
    net = identity_network(2)
    assert np.array_equal(net.layers[0].csr.toarray(), [[1, 0], [0, 1], [-1, 0], [0, -1]])
    assert np.array_equal(net.layers[1].csr.toarray(),
                          [[0, 0, 1, 0, -1, 0], [0, 0, 0, 1, 0, -1]])


def test_affine_output_layer_has_no_activation():
    net = affine_network([[2.0]], [1.0])
    assert realize(net, [3.0])[0] == 7.0
    assert realize(net, [-3.0])[0] == -5.0


def test_squaring_value_from_interpolant():
    # k = 0 on [0, 1/2] with m = 1: slope 1/2
    assert realize(squaring_network(1), [0.25])[0] == 0.125


def test_dimension_errors():
    with pytest.raises(DimensionError):
        realize(identity_network(2), [1.0])
    with pytest.raises(DimensionError):
        concatenate(identity_network(2), identity_network(3))
    with pytest.raises(DimensionError):
        parallelize([identity_network(1), identity_network(2)])
    with pytest.raises(ValueError):
        parallelize([])
    with pytest.raises(DimensionError):
        Network(2, (dense_layer(np.ones((1, 3))),))


def test_make_layer_normal_form():
    layer = make_layer(2, 2, [1, 0, 1, 0], [0, 1, 0, 0], [1.0, 2.0, -1.0, 0.0], [1, 1], [3.0, 0.5])
    # duplicates summed, zeros dropped
    assert list(layer.row_idx) == [0]
    assert list(layer.col_idx) == [1]
    assert list(layer.bias_values) == [3.5]
    assert layer.nnz == 2


def test_concatenate_examples():
    net = concatenate(identity_network(2), identity_network(2))
    assert net.num_layers == 3
    x = np.array([0.3, -4.0])
    assert np.allclose(realize(net, x), x)
    double = affine_network([[2.0]])
    shift = affine_network([[1.0]], [1.0])
    assert realize(concatenate(shift, double), [3.0])[0] == 7.0


def test_sparse_concatenate_depth():
    rng = np.random.default_rng(1)
    f = random_network(rng, 2, [3, 1])
    g = random_network(rng, 2, [2, 4, 2])
    h = sparse_concatenate(f, g)
    assert h.num_layers == 5
    assert h.num_weights <= 2 * f.num_weights + 2 * g.num_weights
    idid = sparse_concatenate(identity_network(1), identity_network(1))
    assert idid.num_weights <= 16
    assert realize(idid, [-2.5])[0] == -2.5


def test_parallelize_identities():
    p = parallelize([identity_network(1), identity_network(1)])
    assert np.array_equal(realize(p, [4.0]), [4.0, 4.0])
    assert p.num_weights == 8
    assert p.num_neurons == 4 + 4 - 1


def test_parallelize_depth_is_max():
    rng = np.random.default_rng(2)
    nets = [random_network(rng, 2, [3, 1]), random_network(rng, 2, [2, 2, 2, 1])]
    assert parallelize(nets).num_layers == 4


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_composition_matches_oracle(seed):
    rng = np.random.default_rng(seed)
    d, widths = random_shape(rng)
    g = random_network(rng, d, widths)
    _, fw = random_shape(rng, d=g.output_dim)
    f = random_network(rng, g.output_dim, fw)
    X = rng.normal(size=(20, d))
    ref = realize(f, realize(g, X))
    tol = 1e-9 * (1 + np.abs(ref))
    assert np.all(np.abs(realize(concatenate(f, g), X) - ref) <= tol)
    assert np.all(np.abs(realize(sparse_concatenate(f, g), X) - ref) <= tol)
    h = sparse_concatenate(f, g)
    assert concatenate(f, g).num_layers == f.num_layers + g.num_layers - 1
    assert h.num_layers == f.num_layers + g.num_layers
    assert h.num_weights <= 2 * f.num_weights + 2 * g.num_weights
    assert h.num_neurons <= 2 * f.num_neurons + 2 * g.num_neurons


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 4))
def test_parallelize_matches_oracle(seed, count):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(1, 4))
    nets = [random_network(rng, d, random_shape(rng, d)[1]) for _ in range(count)]
    p = parallelize(nets)
    X = rng.normal(size=(15, d))
    ref = np.hstack([realize(n, X) for n in nets])
    assert np.all(np.abs(realize(p, X) - ref) <= 1e-12 * (1 + np.abs(ref)))
    assert p.num_weights == sum(n.num_weights for n in nets)
    assert p.num_neurons == sum(n.num_neurons for n in nets) - (count - 1) * d
    assert p.num_layers == max(n.num_layers for n in nets)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_standardization(seed):
    rng = np.random.default_rng(seed)
    d, widths = random_shape(rng)
    net = random_network(rng, d, widths)
    st_net = to_standard(net)
    X = rng.normal(size=(20, d))
    ref = realize(net, X)
    assert np.all(np.abs(realize(st_net, X) - ref) <= 1e-9 * (1 + np.abs(ref)))
    L, M, N = net.counts()
    assert st_net.is_standard()
    assert st_net.num_layers == L
    assert st_net.num_neurons <= 2 * L * N
    assert st_net.num_weights <= 2 * (L * N + M)


def test_standardization_examples():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(100, 2))
    st_id = to_standard(identity_network(2))
    assert st_id.is_standard()
    assert np.abs(realize(st_id, X) - X).max() <= 1e-12
    net = random_network(rng, 3, [4, 3, 5, 2])
    st_net = to_standard(net)
    Y = rng.normal(size=(50, 3))
    assert np.abs(realize(st_net, Y) - realize(net, Y)).max() <= 1e-9
    assert st_net.num_neurons <= 2 * 4 * net.num_neurons
    # an affine net has nothing to rewrite
    aff = affine_network([[1.0, 2.0]])
    assert to_standard(aff) == aff


def test_architecture_round_trip():
    rng = np.random.default_rng(4)
    net = random_network(rng, 3, [4, 2, 1])
    arch = architecture_of(net)
    assert instantiate(arch, weights_of(net)) == net
    zero = instantiate(arch, np.zeros(arch.num_weights))
    assert np.all(realize(zero, rng.normal(size=(5, 3))) == 0)
    assert has_architecture(instantiate(arch, rng.normal(size=arch.num_weights)), arch)
    with pytest.raises(DimensionError):
        instantiate(arch, np.ones(arch.num_weights + 1))


def test_off_mask_entry_breaks_architecture():
    net = affine_network([[1.0, 0.0]])
    other = affine_network([[1.0, 1.0]])
    assert not has_architecture(other, architecture_of(net))
    assert has_architecture(net, architecture_of(other))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_json_round_trip_bit_exact(seed):
    rng = np.random.default_rng(seed)
    d, widths = random_shape(rng)
    net = random_network(rng, d, widths)
    back = loads(dumps(net))
    assert back == net
    assert dumps(back) == dumps(net)


def test_json_layout():
    data = json.loads(dumps(affine_network([[2.0, 0.0]], [1.0])))
    assert data == {"input_dim": 2, "layers": [
        {"rows": 1, "cols": 2, "triplets": [[0, 0, 2.0]], "bias": [[0, 1.0]]}]}


def test_lipschitz_bound_dominates_finite_differences():
    rng = np.random.default_rng(5)
    for _ in range(20):
        d, widths = random_shape(rng)
        net = random_network(rng, d, widths, out=1)
        X = rng.random((200, d))
        V = rng.normal(size=(200, d))
        V /= np.linalg.norm(V, axis=1, keepdims=True)
        h = 1e-4
        fd = np.abs(realize(net, X + h * V) - realize(net, X))[:, 0] / h
        assert fd.max() <= lipschitz_upper_bound(net) * (1 + 1e-6)
