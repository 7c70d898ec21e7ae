import numpy as np
import pytest

from flowfit import autodiff as ad
from flowfit.nets import MadeNet, Mlp, made_degrees, made_masks
from flowfit.rng import Rng

from helpers import finite_diff_grad, finite_diff_jacobian, max_rel_err


def test_zero_network_outputs_zero():
    net = Mlp([3, 8, 2], Rng(0))
    for w in net.weights:
        w.value[:] = 0.0
    out = net(ad.constant(Rng(1).normal(5, 3)))
    assert np.array_equal(out.value, np.zeros((5, 2)))


def test_single_layer_identity():
    net = Mlp([3, 3], Rng(0), zero_init_last=False)
    net.weights[0].value[:] = np.eye(3)
    x = Rng(2).normal(4, 3)
    out = net(ad.constant(x))
    assert np.array_equal(out.value, x)


def test_zero_init_last_output_is_bias():
    net = Mlp([2, 16, 2], Rng(3))
    net.biases[-1].value[:] = [[0.3, -0.7]]
    out = net(ad.constant(Rng(4).normal(6, 2)))
    assert np.allclose(out.value, [[0.3, -0.7]], rtol=0, atol=0)


def test_mlp_matches_independent_recomputation():
    net = Mlp([2, 16, 2], Rng(42), zero_init_last=False)
    x = Rng(43).normal(10, 2)
    out = net(ad.constant(x)).value
    # standalone matrix arithmetic from the raw parameter values
    h = np.tanh(x @ net.weights[0].value + net.biases[0].value)
    expect = h @ net.weights[1].value + net.biases[1].value
    assert np.max(np.abs(out - expect)) < 1e-12


def test_mlp_output_scale_zero_init_keeps_bias():
    net = Mlp([2, 8, 3], Rng(5), zero_init_last=False, output_scale=True)
    net.biases[-1].value[:] = [[1.0, 2.0, 3.0]]
    out = net(ad.constant(Rng(6).normal(4, 2)))
    assert np.allclose(out.value, [[1.0, 2.0, 3.0]], rtol=0, atol=0)


def test_mlp_parameter_gradients_match_fd():
    rng = Rng(7)
    net = Mlp([2, 6, 2], rng, zero_init_last=False)
    x = rng.normal(5, 2)
    w = rng.normal(5, 2)

    def loss_value():
        return ad.sum_(ad.mul(net(ad.constant(x)), ad.constant(w)))

    grads = ad.backward(loss_value(), params=[p for _, p in net.parameters()])
    for _, p in net.parameters():
        def f(v, p=p):
            old = p.value.copy()
            p.value = v
            try:
                return loss_value().item()
            finally:
                p.value = old
        assert max_rel_err(grads[p], finite_diff_grad(f, p.value)) < 1e-5


def test_made_degrees_cycle():
    degs = made_degrees(3, [8, 8])
    assert list(degs[0]) == [1, 2, 3]
    assert list(degs[1]) == [1, 2, 1, 2, 1, 2, 1, 2]


def test_made_masks_d1_output_disconnected():
    masks = made_masks(1, [4, 4], num_params=3)
    assert np.array_equal(masks[-1], np.zeros((4, 3)))


def test_made_masks_d2_structure():
    masks = made_masks(2, [4], num_params=1)
    out_mask = masks[-1]
    # all hidden degrees are 1 when D=2: dim 1 sees nothing, dim 2 sees all
    assert np.array_equal(out_mask[:, 0], np.zeros(4))
    assert np.array_equal(out_mask[:, 1], np.ones(4))


@pytest.mark.parametrize("dim", [2, 3, 5])
def test_made_jacobian_strictly_lower_triangular(dim):
    rng = Rng(100 + dim)
    net = MadeNet(dim, [8, 8], num_params=2, rng=rng, zero_init_last=False)
    x0 = rng.normal(1, dim)[0]

    def f(x):
        return net(ad.constant(x[None, :])).value[0]

    jac = finite_diff_jacobian(f, x0)  # (K*D, D)
    for i in range(1, dim + 1):        # 1-based output dimension
        for col in net.dim_cols(i):
            assert np.max(np.abs(jac[col, i - 1:])) < 1e-10


def test_made_zero_init_heads_equal_biases():
    net = MadeNet(3, [8], num_params=2, rng=Rng(8))
    net.biases[-1].value[:] = np.arange(6.0)[None, :]
    out = net(ad.constant(Rng(9).normal(5, 3)))
    assert np.allclose(out.value, np.arange(6.0), rtol=0, atol=0)


def test_made_first_dim_block_input_independent():
    rng = Rng(10)
    net = MadeNet(2, [6], num_params=2, rng=rng, zero_init_last=False)
    blocks = []
    for _ in range(100):
        out = net(ad.constant(rng.normal(1, 2)))
        blocks.append(out.value[:, net.dim_cols(1)])
    assert np.max(np.abs(np.diff(np.vstack(blocks), axis=0))) == 0.0


def test_made_parameter_gradients_match_fd():
    rng = Rng(11)
    net = MadeNet(3, [5], num_params=2, rng=rng, zero_init_last=False)
    x = rng.normal(4, 3)
    w = rng.normal(4, 6)

    def loss_value():
        return ad.sum_(ad.mul(net(ad.constant(x)), ad.constant(w)))

    grads = ad.backward(loss_value(), params=[p for _, p in net.parameters()])
    for _, p in net.parameters():
        def f(v, p=p):
            old = p.value.copy()
            p.value = v
            try:
                return loss_value().item()
            finally:
                p.value = old
        assert max_rel_err(grads[p], finite_diff_grad(f, p.value)) < 1e-5
