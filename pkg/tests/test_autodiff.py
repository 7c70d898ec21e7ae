import numpy as np
import pytest

from flowfit import autodiff as ad
from flowfit.errors import DomainError, ShapeError
from flowfit.rng import Rng

from helpers import finite_diff_grad, max_rel_err


def scalar_loss(node, weights):
    """Weighted sum turning any output into a scalar with informative grads."""
    return ad.sum_(ad.mul(node, ad.constant(weights)))


def check_grad(build, x0, eps=1e-6, tol=1e-5):
    """build(leaf) -> scalar Node; compares backprop to central differences."""
    leaf = ad.variable(x0)
    root = build(leaf)
    ad.backward(root)
    fd = finite_diff_grad(lambda v: build(ad.constant(v)).item(), x0, eps)
    assert leaf.grad is not None
    assert max_rel_err(leaf.grad, fd) < tol


def test_add_same_node_twice():
    a = ad.variable([[1.0, 2.0]])
    out = ad.add(a, a)
    assert np.array_equal(out.value, [[2.0, 4.0]])
    ad.backward(ad.sum_(out))
    assert np.array_equal(a.grad, [[2.0, 2.0]])


def test_exp_log_inverse_pair():
    x = np.array([[0.5, 1.0, 3.7]])
    leaf = ad.variable(x)
    out = ad.exp(ad.log(leaf))
    assert np.allclose(out.value, x, rtol=0, atol=1e-15)
    ad.backward(ad.sum_(out))
    assert np.allclose(leaf.grad, 1.0, rtol=0, atol=1e-12)


def test_matmul_value_and_fd_gradient():
    a = ad.variable([[1.0, 2.0]])
    b = ad.constant([[3.0], [4.0]])
    out = ad.matmul(a, b)
    assert np.array_equal(out.value, [[11.0]])
    ad.backward(out)
    fd = finite_diff_grad(lambda v: (v @ b.value)[0, 0], a.value)
    assert max_rel_err(a.grad, fd) < 1e-5
    assert np.allclose(a.grad, [[3.0, 4.0]])


def test_backward_power_rule():
    p = ad.variable([[3.0]])
    root = ad.sum_(ad.pow_(p, 2))
    ad.backward(root)
    assert np.allclose(p.grad, [[6.0]], atol=1e-14)


def test_backward_unreachable_param_zero():
    p = ad.Param([[1.5]], "p")
    q = ad.Param([[2.0]], "q")
    root = ad.sum_(ad.mul(p, p))
    grads = ad.backward(root, params=[p, q])
    assert np.allclose(grads[p], [[3.0]])
    assert np.array_equal(grads[q], [[0.0]])


def test_backward_sin_at_reference_points():
    p = ad.variable([[0.0, np.pi / 2.0]])
    root = ad.sum_(ad.sin(p))
    ad.backward(root)
    assert np.allclose(p.grad, [[1.0, 0.0]], atol=1e-15)


def test_backward_requires_scalar_root():
    p = ad.variable([[1.0, 2.0]])
    with pytest.raises(ShapeError):
        ad.backward(ad.exp(p))


def test_gradient_accumulation_mul_vs_pow():
    x0 = np.array([[1.7, -0.3, 2.2]])
    a = ad.variable(x0)
    b = ad.variable(x0)
    ad.backward(ad.sum_(ad.mul(a, a)))
    ad.backward(ad.sum_(ad.pow_(b, 2)))
    assert np.max(np.abs(a.grad - b.grad)) < 1e-12


def test_two_runs_bit_identical():
    rng = Rng(7)
    x0 = rng.normal(4, 3)
    w = ad.Param(rng.normal(3, 2), "w")

    def run():
        x = ad.constant(x0)
        out = ad.tanh(ad.matmul(x, w))
        loss = ad.mean_(ad.mul(out, out))
        grads = ad.backward(loss, params=[w])
        return loss.item(), grads[w].copy()

    l1, g1 = run()
    l2, g2 = run()
    assert l1 == l2
    assert np.array_equal(g1, g2)


def test_shape_mismatch_named():
    a = ad.constant(np.zeros((2, 3)))
    b = ad.constant(np.zeros((4, 5)))
    with pytest.raises(ShapeError) as exc:
        ad.add(a, b)
    assert "add" in str(exc.value)
    assert "(2, 3)" in str(exc.value)
    with pytest.raises(ShapeError):
        ad.matmul(a, ad.constant(np.zeros((2, 2))))


def test_log_and_div_domain_errors():
    with pytest.raises(DomainError):
        ad.log(ad.constant([[0.0, 1.0]]))
    with pytest.raises(DomainError):
        ad.log(ad.constant([[-1.0]]))
    with pytest.raises(DomainError):
        ad.div(ad.constant([[1.0]]), ad.constant([[0.0]]))
    with pytest.raises(DomainError):
        ad.pow_(ad.constant([[-1.0]]), 0.5)


def test_broadcast_row_over_batch():
    rng = Rng(11)
    row = rng.normal(1, 4)
    batch = rng.normal(5, 4)
    w = rng.normal(5, 4)
    check_grad(lambda leaf: scalar_loss(ad.mul(ad.add(leaf, ad.constant(batch)), ad.constant(batch)), w), row)
    out = ad.add(ad.constant(row), ad.constant(batch))
    assert out.value.shape == (5, 4)


def test_no_grad_suppresses_tape():
    p = ad.Param([[1.0]], "p")
    with ad.no_grad():
        out = ad.exp(p)
    assert out.parents == () and not out.requires_grad


def _away_from(v, pts, margin=1e-3):
    for p in pts:
        v = np.where(np.abs(v - p) < margin, v + 2 * margin, v)
    return v


def _op_fd_cases():
    """One domain-aware (input, scalar-builder) pair per registered op."""
    rng = Rng(1234)
    base = rng.normal(3, 4)
    other = rng.uniform(3, 4, 0.5, 2.0)
    w34 = rng.normal(3, 4)
    w31 = rng.normal(3, 1)
    w14 = rng.normal(1, 4)
    w35 = rng.normal(3, 5)
    w42 = rng.normal(4, 2)
    w77 = rng.normal(3, 7)
    cc_other = rng.normal(3, 3)

    return {
        "add": (base, lambda x: scalar_loss(ad.add(x, ad.constant(other)), w34)),
        "sub": (base, lambda x: scalar_loss(ad.sub(ad.constant(other), x), w34)),
        "mul": (base, lambda x: scalar_loss(ad.mul(x, ad.constant(other)), w34)),
        "div": (base, lambda x: scalar_loss(ad.div(ad.constant(other), ad.add(x, 5.0)), w34)),
        "matmul": (base, lambda x: scalar_loss(ad.matmul(x, ad.constant(w42)), 1.0)),
        "exp": (base * 0.5, lambda x: scalar_loss(ad.exp(x), w34)),
        "log": (np.abs(base) + 0.2, lambda x: scalar_loss(ad.log(x), w34)),
        "tanh": (base, lambda x: scalar_loss(ad.tanh(x), w34)),
        "relu": (_away_from(base, [0.0]), lambda x: scalar_loss(ad.relu(x), w34)),
        "sigmoid": (base, lambda x: scalar_loss(ad.sigmoid(x), w34)),
        "softplus": (base, lambda x: scalar_loss(ad.softplus(x), w34)),
        "sin": (base, lambda x: scalar_loss(ad.sin(x), w34)),
        "cos": (base, lambda x: scalar_loss(ad.cos(x), w34)),
        "atan2": (base + 3.0, lambda x: scalar_loss(ad.atan2(x, ad.constant(other)), w34)),
        "sum": (base, lambda x: ad.add(
            ad.add(ad.sum_(x), ad.sum_(ad.mul(ad.sum_(x, axis=0), ad.constant(w14)))),
            ad.sum_(ad.mul(ad.sum_(x, axis=1), ad.constant(w31))))),
        "mean": (base, lambda x: ad.add(ad.mean_(x), ad.sum_(ad.mul(ad.mean_(x, axis=1), ad.constant(w31))))),
        "broadcast": (rng.normal(1, 4), lambda x: scalar_loss(ad.broadcast_rows(x, 3), w34)),
        "concat-cols": (rng.normal(3, 2), lambda x: scalar_loss(ad.concat_cols(x, ad.constant(cc_other), x), w77)),
        "select-cols": (base, lambda x: scalar_loss(ad.select_cols(x, [2, 0, 1, 0, 3]), w35)),
        "clamp": (_away_from(base, [-0.5, 0.7]), lambda x: scalar_loss(ad.clamp(x, -0.5, 0.7), w34)),
        "pow": (np.abs(base) + 0.2, lambda x: scalar_loss(ad.pow_(x, 2.5), w34)),
    }


@pytest.mark.parametrize("name", sorted(ad.OPS))
def test_every_op_matches_finite_differences(name):
    x0, build = _op_fd_cases()[name]
    check_grad(build, x0)
