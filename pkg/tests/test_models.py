import numpy as np
import pytest

from home_equiv.errors import BadConfig, ShapeMismatch
from home_equiv.models import (Decoder, Encoder, decode, encode, init_decoder,
                               init_encoder, mlp_graph)
from home_equiv.tensor import Graph, finite_diff_check


# ---- independent oracle: scalar MLP ----

def mlp_oracle(layers, x):
    h = list(x)
    for li, (w, b) in enumerate(layers):
        out = []
        for i in range(w.shape[0]):
            acc = b[0, i]
            for j in range(w.shape[1]):
                acc += w[i, j] * h[j]
            if li < len(layers) - 1:
                acc = max(acc, 0.0)
            out.append(acc)
        h = out
    return np.array(h)


def test_zero_weights_give_zero_output():
    enc = Encoder([(np.zeros((4, 6)), np.zeros((1, 4)))], 6)
    assert np.array_equal(encode(enc, np.ones((2, 3))), np.zeros(4))
    dec = Decoder([(np.zeros((3, 4)), np.zeros((1, 3))),
                   (np.zeros((3, 3)), np.zeros((1, 3))),
                   (np.zeros((3, 3)), np.zeros((1, 3))),
                   (np.zeros((5, 3)), np.zeros((1, 5)))])
    logits = decode(dec, np.ones(4))
    assert np.array_equal(logits, np.zeros(5))
    # zero logits soften to the uniform distribution
    g = Graph()
    soft = g.value(g.row_softmax(g.leaf(logits.reshape(1, -1))))
    assert np.allclose(soft, 0.2)


def test_single_identity_layer_returns_flattened_pixels():
    enc = Encoder([(np.eye(4), np.zeros((1, 4)))], 4)
    img = np.array([[0.1, 0.2], [0.3, 0.4]])
    assert np.allclose(encode(enc, img), [0.1, 0.2, 0.3, 0.4], atol=1e-15)


def test_encoder_matches_scalar_oracle():
    rng = np.random.default_rng(0)
    enc = init_encoder(12, (7, 5), 4, rng)
    img = rng.uniform(0, 1, (3, 4))
    want = mlp_oracle(enc.layers, img.ravel())
    assert np.max(np.abs(encode(enc, img) - want)) < 1e-12


def test_decoder_matches_scalar_oracle():
    rng = np.random.default_rng(1)
    dec = init_decoder(6, (5, 4, 3), 4, rng)
    z = rng.normal(size=6)
    want = mlp_oracle(dec.layers, z)
    assert np.max(np.abs(decode(dec, z) - want)) < 1e-12


def test_decoder_passthrough_construction():
    # width-1 positive chain: logits = w_out * (x + b1 + b2 + b3) + b_out
    hidden = [(np.ones((1, 1)), np.array([[0.5]])),
              (np.ones((1, 1)), np.array([[1.0]])),
              (np.ones((1, 1)), np.array([[0.25]]))]
    out = (np.array([[2.0], [1.0]]), np.array([[0.1, -0.2]]))
    dec = Decoder(hidden + [out])
    x = 3.0
    logits = decode(dec, np.array([x]))
    expected = np.array([2.0 * (x + 1.75) + 0.1, 1.0 * (x + 1.75) - 0.2])
    assert np.max(np.abs(logits - expected)) < 1e-12


def test_init_seeded_determinism_and_difference():
    a = init_encoder(10, (8,), 4, np.random.default_rng(0))
    b = init_encoder(10, (8,), 4, np.random.default_rng(0))
    c = init_encoder(10, (8,), 4, np.random.default_rng(1))
    for (wa, ba), (wb, bb) in zip(a.layers, b.layers):
        assert np.array_equal(wa, wb) and np.array_equal(ba, bb)
    assert not np.array_equal(a.layers[0][0], c.layers[0][0])


def test_he_variance_near_two_over_fan_in():
    rng = np.random.default_rng(2)
    enc = init_encoder(100, (1000,), 4, rng)
    w = enc.layers[0][0]
    var = float(np.var(w))
    assert abs(var - 0.02) < 0.2 * 0.02
    assert np.array_equal(enc.layers[0][1], np.zeros((1, 1000)))


def test_shape_errors():
    enc = Encoder([(np.zeros((4, 6)), np.zeros((1, 4)))], 6)
    with pytest.raises(ShapeMismatch):
        encode(enc, np.ones((3, 3)))
    with pytest.raises(BadConfig):
        Decoder([(np.zeros((2, 2)), np.zeros((1, 2)))])  # needs 3 hidden + out
    with pytest.raises(ShapeMismatch):
        Encoder([(np.zeros((4, 5)), np.zeros((1, 4)))], 6)


def test_end_to_end_cross_entropy_gradient():
    rng = np.random.default_rng(3)
    enc = init_encoder(8, (6,), 4, rng)
    dec = init_decoder(4, (5, 4, 3), 3, rng)
    x = rng.uniform(0, 1, (2, 8))
    labels = np.array([0, 2])

    g = Graph()
    nids = {}
    for name, arr in list(enc.param_items()) + list(dec.param_items()):
        nids[name] = g.leaf(arr)
    x_nid = g.leaf(x)
    enc_n = [(nids[f"enc/{i}/w"], nids[f"enc/{i}/b"]) for i in range(len(enc.layers))]
    dec_n = [(nids[f"dec/{i}/w"], nids[f"dec/{i}/b"]) for i in range(len(dec.layers))]
    loss = g.cross_entropy(mlp_graph(g, dec_n, mlp_graph(g, enc_n, x_nid)), labels)

    for name in ("enc/0/w", "enc/1/b", "dec/0/w", "dec/3/w", "dec/3/b"):
        nid = nids[name]
        x0 = g.value(nid).copy()
        grad = g.backward(loss, wrt=[nid])[nid]

        def f(arr, nid=nid):
            g.set_leaf(nid, arr)
            g.forward()
            return float(g.value(loss))

        err = finite_diff_check(f, x0, grad)
        f(x0)
        assert err < 1e-6, f"{name}: {err}"
