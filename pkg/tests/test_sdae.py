import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dha import gradcheck, sdae
from dha.errors import DimensionMismatch, EmptyData
from dha.numkernel import make_rng
from dha.sdae import ComponentSpec, SdaeParams


def _one_layer(act="sigmoid", out="sigmoid"):
    spec = ComponentSpec(1, input_dim=2, layers=2, mid_dim=1, activation=act, output_activation=out,
                         corruption=0.0)
    return spec, sdae.init_params(spec, make_rng(0))


def test_identity_network_passthrough():
    spec = ComponentSpec(1, 2, layers=2, mid_dim=2, activation="identity",
                         output_activation="identity", corruption=0.0)
    p = SdaeParams([np.eye(2), np.eye(2)], [np.zeros(2), np.zeros(2)])
    np.testing.assert_array_equal(sdae.encode(p, spec, np.array([0.2, 0.8]))[-1], [0.2, 0.8])
    np.testing.assert_array_equal(sdae.decode(p, spec, np.array([0.2, 0.8])), [0.2, 0.8])


def test_encode_hand_example():
    spec, p = _one_layer()
    p.W[0] = np.array([[1.0, -1.0]])
    p.b[0] = np.array([0.5])
    h = sdae.encode(p, spec, np.array([1.0, 2.0]))[-1]
    assert h[0] == pytest.approx(1 / (1 + np.exp(0.5)), abs=1e-15)
    assert h[0] == pytest.approx(0.377541, abs=1e-6)


def test_zero_weights_give_half():
    spec = ComponentSpec(1, 5, layers=4, mid_dim=2, width_increment=1, corruption=0.0)
    p = sdae.init_params(spec, make_rng(0))
    for w in p.W:
        w[...] = 0
    for h in sdae.encode(p, spec, np.arange(5.0)):
        np.testing.assert_array_equal(h, 0.5)
    np.testing.assert_array_equal(sdae.decode(p, spec, np.zeros(2)), 0.5)


def test_decode_hand_example():
    spec, p = _one_layer(out="identity")
    p.W[1] = np.array([[2.0], [-1.0]])
    p.b[1] = np.array([0.0, 1.0])
    np.testing.assert_array_equal(sdae.decode(p, spec, np.array([3.0])), [6.0, -2.0])


def test_reconstruction_loss_examples():
    assert sdae.reconstruction_loss([1, 2], [1, 2]) == 0
    assert sdae.reconstruction_loss([1, 0], [0, 0]) == 0.5
    assert sdae.reconstruction_loss([1, 2, 3], [1.1, 1.8, 3.0]) == pytest.approx(0.05 / 3, abs=1e-15)
    with pytest.raises(DimensionMismatch):
        sdae.reconstruction_loss([1, 2], [1, 2, 3])


def test_dimension_checks():
    spec, p = _one_layer()
    with pytest.raises(DimensionMismatch):
        sdae.encode(p, spec, np.zeros(3))
    with pytest.raises(DimensionMismatch):
        sdae.decode(p, spec, np.zeros(2))


def test_width_rule():
    spec = ComponentSpec(1, input_dim=1000, layers=6, mid_dim=50, width_increment=100)
    assert spec.widths() == [1000, 250, 150, 50]
    assert [s for s in spec.layer_shapes()] == [(250, 1000), (150, 250), (50, 150),
                                                  (150, 50), (250, 150), (1000, 250)]
    clamp = ComponentSpec(1, input_dim=120, layers=4, mid_dim=50, width_increment=100)
    assert clamp.widths() == [120, 120, 50]
    with pytest.raises(ValueError):
        ComponentSpec(1, 10, layers=3)


@given(input_dim=st.integers(1, 30), half=st.integers(1, 3), mid=st.integers(1, 10), k=st.integers(0, 10))
def test_shapes_chain(input_dim, half, mid, k):
    spec = ComponentSpec(1, input_dim, layers=2 * half, mid_dim=mid, width_increment=k, corruption=0.0)
    p = sdae.init_params(spec, make_rng(0))
    x = np.ones((3, input_dim))
    acts = sdae.forward(p, spec, x)
    assert acts[-1].shape == x.shape
    assert acts[half].shape == (3, mid)


def test_corruption_only_touches_input():
    spec = ComponentSpec(1, 8, layers=2, mid_dim=3, corruption=0.5)
    p = sdae.init_params(spec, make_rng(0))
    x = np.arange(1.0, 9.0)
    clean1 = sdae.encode(p, spec, x)
    clean2 = sdae.encode(p, spec, x)
    np.testing.assert_array_equal(clean1[-1], clean2[-1])
    acts = sdae.forward(p, spec, x, make_rng(3))
    noisy_in = acts[0][0]
    assert np.all((noisy_in == 0) | (noisy_in == x))


def test_backward_weight_decay_only():
    spec = ComponentSpec(1, 4, layers=2, mid_dim=2, corruption=0.0)
    p = sdae.init_params(spec, make_rng(1))
    x = np.random.default_rng(0).random((3, 4))
    acts = sdae.forward(p, spec, x)
    g = sdae.backward(p, spec, acts, grad_mid=np.zeros((3, 2)), target=acts[-1], recon_scale=1.0,
                      weight_decay=0.3)
    for name, arr in p.named_tensors().items():
        np.testing.assert_allclose(g[name], 0.3 * arr, rtol=0, atol=1e-15)


def test_backward_linear_hand_case():
    # single linear decoder layer: d/dW' of lam * mean((W'h + b' - s)^2) = lam * 2 (s_bar - s) h^T / dim
    spec = ComponentSpec(1, 2, layers=2, mid_dim=2, activation="identity", output_activation="identity",
                         corruption=0.0)
    p = SdaeParams([np.eye(2), np.array([[1.0, 2.0], [0.5, -1.0]])], [np.zeros(2), np.zeros(2)])
    x = np.array([[1.0, 3.0]])
    acts = sdae.forward(p, spec, x)
    s_bar = acts[-1][0]
    lam = 0.7
    g = sdae.backward(p, spec, acts, target=x, recon_scale=lam)
    hand = lam * 2 * np.outer(s_bar - x[0], acts[1][0]) / 2
    np.testing.assert_allclose(g["dec0.W"], hand, rtol=1e-15)


def _objective(p, spec, x, gm, lam, wd):
    acts = sdae.forward(p, spec, x)
    rec = lam * float(np.sum(sdae.reconstruction_loss(x, acts[-1])))
    anchor = float(np.sum(gm * acts[spec.layers // 2]))
    return rec + anchor + 0.5 * wd * sum(float(np.sum(a * a)) for a in p.named_tensors().values())


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10_000), half=st.integers(1, 2), input_dim=st.integers(2, 20),
       mid=st.integers(1, 10), act=st.sampled_from(["sigmoid", "tanh", "identity"]))
def test_gradient_matches_finite_differences(seed, half, input_dim, mid, act):
    spec = ComponentSpec(1, input_dim, layers=2 * half, mid_dim=mid, activation=act,
                         output_activation="sigmoid", corruption=0.0)
    rng = np.random.default_rng(seed)
    p = sdae.init_params(spec, make_rng(seed))
    for b in p.b:
        b[...] = rng.normal(0, 0.3, b.shape)
    x = rng.random((3, input_dim))
    gm = rng.normal(size=(3, mid))
    acts = sdae.forward(p, spec, x)
    g = sdae.backward(p, spec, acts, grad_mid=gm, target=x, recon_scale=0.9, weight_decay=0.05)
    checks = gradcheck.check_tensors(lambda: _objective(p, spec, x, gm, 0.9, 0.05), p.named_tensors(), g)
    assert all(c.ok for c in checks), [(c.name, c.rel_error) for c in checks]


def test_pretrain_reduces_loss_on_subspace_data():
    rng = np.random.default_rng(0)
    basis = rng.random((2, 8))
    data = 0.5 * rng.random((200, 2)) @ basis / 2 + 0.2
    spec = ComponentSpec(1, 8, layers=2, mid_dim=2, activation="sigmoid", output_activation="identity",
                         corruption=0.0)
    init = sdae.init_params(spec, make_rng(4))
    trained = sdae.pretrain_layerwise(spec, data, epochs=200, lr=0.5, batch=20, rng=make_rng(5), params=init)

    def loss(p):
        return float(np.mean(sdae.reconstruction_loss(data, sdae.forward(p, spec, data)[-1])))

    assert loss(trained) < loss(init)


def test_pretrain_zero_lr_and_determinism():
    spec = ComponentSpec(1, 6, layers=4, mid_dim=2, width_increment=2, corruption=0.2)
    data = np.random.default_rng(1).random((30, 6))
    init = sdae.init_params(spec, make_rng(9))
    same = sdae.pretrain_layerwise(spec, data, 1, 0.0, 8, make_rng(2), params=init)
    for a, b in zip(init.W + init.b, same.W + same.b):
        assert np.array_equal(a, b)
    r1 = sdae.pretrain_layerwise(spec, data, 2, 0.3, 8, make_rng(2))
    r2 = sdae.pretrain_layerwise(spec, data, 2, 0.3, 8, make_rng(2))
    for a, b in zip(r1.W + r1.b, r2.W + r2.b):
        assert np.array_equal(a, b)


def test_pretrain_empty():
    spec = ComponentSpec(1, 3, corruption=0.0)
    with pytest.raises(EmptyData):
        sdae.pretrain_layerwise(spec, np.zeros((0, 3)), 1, 0.1, 4, make_rng(0))
