import numpy as np
import pytest

from src.numerics import autodiff as ad
from src.numerics.autodiff import ShapeError
from src.numerics.gradcheck import numerical_grad, relative_error

TOL = 1e-4


def _check_grads(build, arrays, rng, h=1e-5):
    """Compare backward() against central differences of sum(build(*leaves) * probe)."""
    leaves = [ad.leaf(a, name=f"x{i}") for i, a in enumerate(arrays)]
    out = build(*leaves)
    probe = rng.standard_normal(out.shape)

    def loss_of(nodes):
        return ad.sum_(ad.multiply(build(*nodes), ad.constant(probe)))

    grads = ad.backward(loss_of(leaves))

    def f():
        return float(loss_of([ad.constant(a) for a in arrays]).data)

    for i, a in enumerate(arrays):
        numeric = numerical_grad(f, a, h=h)
        assert relative_error(grads[f"x{i}"], numeric) < TOL, f"input {i}"


def test_add_broadcast_grad(rng):
    _check_grads(ad.add, [rng.standard_normal((4, 3)), rng.standard_normal((3,))], rng)


def test_subtract_grad(rng):
    _check_grads(ad.subtract, [rng.standard_normal((2, 3)), rng.standard_normal((2, 1))], rng)


def test_multiply_broadcast_grad(rng):
    _check_grads(ad.multiply, [rng.standard_normal((3, 1, 4)), rng.standard_normal((1, 2, 4))], rng)


def test_matmul_grad(rng):
    _check_grads(ad.matmul, [rng.standard_normal((5, 3)), rng.standard_normal((3, 2))], rng)


def test_conv2d_grad_batched_and_unbatched(rng):
    w = rng.standard_normal((2, 3, 3, 3))
    _check_grads(ad.conv2d, [rng.standard_normal((3, 5, 4)), w.copy()], rng)
    _check_grads(ad.conv2d, [rng.standard_normal((2, 3, 4, 4)), w.copy()], rng)


def test_unfold3x3_grad(rng):
    _check_grads(ad.unfold3x3, [rng.standard_normal((2, 4, 3))], rng)


def test_elementwise_grads_away_from_kinks(rng):
    x = rng.uniform(0.2, 1.0, size=(3, 4)) * rng.choice([-1.0, 1.0], size=(3, 4))
    for op in (ad.relu, ad.absolute, ad.sin, ad.cos):
        _check_grads(op, [x.copy()], rng)


def test_shape_op_grads(rng):
    _check_grads(lambda a, b: ad.concat([a, b]), [rng.standard_normal((2, 3)), rng.standard_normal((2, 1))], rng)
    _check_grads(lambda a: ad.slice_(a, (slice(1, 3), 0)), [rng.standard_normal((4, 2))], rng)
    _check_grads(lambda a: ad.reshape(a, (3, 4)), [rng.standard_normal((2, 6))], rng)
    _check_grads(lambda a: ad.transpose(a, (2, 0, 1)), [rng.standard_normal((2, 3, 4))], rng)
    _check_grads(lambda a: ad.sum_(a, axis=1), [rng.standard_normal((3, 4))], rng)
    _check_grads(lambda a: ad.mean(a, axis=0), [rng.standard_normal((3, 4))], rng)
    _check_grads(lambda a: ad.scale(a, -2.5), [rng.standard_normal((3,))], rng)


def test_gather_grad_accumulates_repeated_rows(rng):
    rows = np.array([0, 2, 2, 4, 0, 0])
    _check_grads(lambda a: ad.gather(a, rows), [rng.standard_normal((5, 3))], rng)
    table = ad.leaf(np.zeros((3, 2)), name="t")
    grads = ad.backward(ad.sum_(ad.gather(table, [1, 1, 1])))
    np.testing.assert_array_equal(grads["t"], [[0, 0], [3, 3], [0, 0]])


def test_conv2d_matches_brute_force(rng):
    for _ in range(100):
        c, o, h, w = rng.integers(1, 4, size=4)
        x = rng.standard_normal((c, h, w))
        k = rng.standard_normal((o, c, 3, 3))
        padded = np.pad(x, ((0, 0), (1, 1), (1, 1)))
        ref = np.zeros((o, h, w))
        for oc in range(o):
            for i in range(h):
                for j in range(w):
                    ref[oc, i, j] = np.sum(k[oc] * padded[:, i : i + 3, j : j + 3])
        np.testing.assert_allclose(ad.conv2d(x, k).data, ref, atol=1e-9, rtol=0)


def test_unfold3x3_slot_order():
    x = np.arange(2 * 3 * 3, dtype=np.float64).reshape(2, 3, 3)
    u = ad.unfold3x3(ad.constant(x)).data
    assert u.shape == (18, 3, 3)
    # center neighbor k = 4 holds the position itself
    np.testing.assert_array_equal(u[8:10], x)
    # k = 0 is the (-1, -1) neighbor; zero padded at the top-left corner
    np.testing.assert_array_equal(u[0:2, 1, 1], x[:, 0, 0])
    np.testing.assert_array_equal(u[0:2, 0, 0], [0.0, 0.0])


def test_shape_errors():
    with pytest.raises(ShapeError):
        ad.matmul(np.ones((2, 3)), np.ones((2, 3)))
    with pytest.raises(ShapeError):
        ad.add(np.ones((2, 3)), np.ones((4,)))
    with pytest.raises(ShapeError):
        ad.conv2d(np.ones((2, 4, 4)), np.ones((1, 3, 3, 3)))
    with pytest.raises(ShapeError):
        ad.concat([np.ones((2, 3)), np.ones((3, 3))])
    with pytest.raises(ShapeError):
        ad.gather(np.ones((3, 2)), [3])


def test_unknown_op_kind():
    with pytest.raises(KeyError):
        ad.eval_op("softmax", [ad.constant(np.ones(3))])


def test_backward_requires_scalar_root():
    x = ad.leaf(np.ones(3), name="x")
    with pytest.raises(ShapeError):
        ad.backward(ad.scale(x, 2.0))


def test_constants_record_no_graph():
    out = ad.add(ad.constant(np.ones(2)), np.ones(2))
    assert out.op is None
    assert not out.requires_grad


def test_shared_node_gradient_accumulates():
    x = ad.leaf(np.array([3.0]), name="x")
    y = ad.multiply(x, x)
    grads = ad.backward(ad.sum_(ad.add(y, x)))
    np.testing.assert_allclose(grads["x"], [7.0])


def test_slice_with_repeated_indices_accumulates(rng):
    index = np.array([1, 1, 3, 1])
    _check_grads(lambda a: ad.slice_(a, index), [rng.standard_normal((4, 2))], rng)
    x = ad.leaf(np.zeros(4), name="x")
    grads = ad.backward(ad.sum_(ad.slice_(x, np.array([2, 2, 0]))))
    np.testing.assert_array_equal(grads["x"], [1.0, 0.0, 2.0, 0.0])


def test_mean_over_several_axes(rng):
    _check_grads(lambda a: ad.mean(a, axis=(0, 2)), [rng.standard_normal((2, 3, 4))], rng)
    x = ad.leaf(np.ones((2, 3, 4)), name="x")
    grads = ad.backward(ad.sum_(ad.mean(x, axis=(0, 2))))
    np.testing.assert_allclose(grads["x"], np.full((2, 3, 4), 1.0 / 8))


def test_l1_mean_gradient_is_sign_over_count():
    a = np.array([[2.0, 3.0], [0.5, 1.0]])
    b = np.array([[1.0, 4.0], [0.0, 2.0]])
    grads = ad.backward(ad.mean(ad.absolute(ad.subtract(ad.leaf(a, name="a"), ad.leaf(b, name="b")))))
    np.testing.assert_array_equal(grads["a"], np.sign(a - b) / 4)
    np.testing.assert_array_equal(grads["b"], -np.sign(a - b) / 4)


def test_sin_grad_at_zero():
    grads = ad.backward(ad.sum_(ad.sin(ad.leaf(np.array([0.0]), name="x"))))
    np.testing.assert_array_equal(grads["x"], [1.0])


def test_each_graph_starts_from_zero_gradients():
    data = np.array([1.0, -2.0, 3.0])

    def grads_of_fresh_graph():
        x = ad.leaf(data, name="x")
        assert not x.grad.any()
        return ad.backward(ad.sum_(ad.multiply(x, x)))["x"]

    first, second = grads_of_fresh_graph(), grads_of_fresh_graph()
    np.testing.assert_array_equal(first, 2 * data)
    np.testing.assert_array_equal(second, first)
