import numpy as np
import pytest

from ipalm.autodiff import Parameter, Tensor, apply, backward, grad_check, no_grad, ops
from ipalm.errors import ContractError, NumericError, ShapeError
from oracles import matmul_loops


def P(rng, *shape, name="p", positive=False):
    data = rng.normal(size=shape)
    if positive:
        data = np.abs(data) + 0.5
    return Parameter(data, name)


def projected(out: Tensor, rng) -> callable:
    """Scalar objective sum(out * R) with a fixed random R."""
    weights = rng.normal(size=out.shape)
    return lambda t: ops.sum(t * weights)


# kind -> builder(rng) returning (params, f) where f() evaluates the tensor output
def _case_matmul(rng):
    a, b = P(rng, 3, 4, name="a"), P(rng, 4, 2, name="b")
    return [a, b], lambda: apply("matmul", a, b)


def _case_batched_matmul(rng):
    a, b = P(rng, 2, 3, 4, name="a"), P(rng, 4, 2, name="b")
    return [a, b], lambda: apply("matmul", a, b)


def _case_add(rng):
    a, b = P(rng, 3, 4, name="a"), P(rng, 4, name="b")
    return [a, b], lambda: apply("add", a, b)


def _case_sub(rng):
    a, b = P(rng, 3, 1, name="a"), P(rng, 3, 4, name="b")
    return [a, b], lambda: apply("sub", a, b)


def _case_mul(rng):
    a, b = P(rng, 2, 3, name="a"), P(rng, 2, 3, name="b")
    return [a, b], lambda: apply("mul", a, b)


def _case_div(rng):
    a, b = P(rng, 2, 3, name="a"), P(rng, 2, 3, name="b", positive=True)
    return [a, b], lambda: apply("div", a, b)


def _case_scale(rng):
    a = P(rng, 3, 3)
    c = float(rng.normal())
    return [a], lambda: apply("scale", a, c=c)


def _case_exp(rng):
    a = P(rng, 2, 4)
    return [a], lambda: apply("exp", a)


def _case_log(rng):
    a = P(rng, 2, 4, positive=True)
    return [a], lambda: apply("log", a)


def _case_square(rng):
    a = P(rng, 5)
    return [a], lambda: apply("square", a)


def _case_power(rng):
    a = P(rng, 4, positive=True)
    return [a], lambda: apply("power", a, c=-0.5)


def _case_relu(rng):
    # keep entries away from the kink so central differences are valid
    a = P(rng, 3, 4)
    a.data[np.abs(a.data) < 0.05] += 0.2
    return [a], lambda: apply("relu", a)


def _case_sum(rng):
    a = P(rng, 3, 4, 2)
    return [a], lambda: apply("sum", a, axis=1)


def _case_mean(rng):
    a = P(rng, 3, 4)
    return [a], lambda: apply("mean", a, axis=-1, keepdims=True)


def _case_broadcast(rng):
    a = P(rng, 3, 4)
    return [a], lambda: apply("broadcast", a, axis=1, size=5)


def _case_broadcast_to(rng):
    a = P(rng, 1, 4)
    return [a], lambda: apply("broadcast_to", a, shape=(3, 4))


def _case_softmax(rng):
    a = P(rng, 3, 5)
    return [a], lambda: apply("softmax", a, axis=0)


def _case_log_softmax(rng):
    a = P(rng, 3, 5)
    return [a], lambda: apply("log_softmax", a, axis=-1)


def _case_sqdist(rng):
    x, c = P(rng, 2, 3, 4, name="x"), P(rng, 5, 4, name="c")
    return [x, c], lambda: apply("sqdist", x, c)


def _case_reshape(rng):
    a = P(rng, 3, 4)
    return [a], lambda: apply("reshape", a, shape=(2, 6))


def _case_transpose(rng):
    a = P(rng, 2, 3, 4)
    return [a], lambda: apply("transpose", a, axes=(2, 0, 1))


def _case_slice(rng):
    a = P(rng, 4, 6)
    return [a], lambda: apply("slice", a, axis=1, start=1, stop=4)


def _case_concat(rng):
    a, b = P(rng, 2, 3, name="a"), P(rng, 2, 2, name="b")
    return [a, b], lambda: apply("concat", a, b, axis=1)


def _case_gather(rng):
    table = P(rng, 6, 3)
    ids = rng.integers(0, 6, size=(2, 5))
    return [table], lambda: apply("gather", table, ids)


def _case_masked_fill(rng):
    a = P(rng, 4, 4)
    mask = rng.random((4, 4)) < 0.4
    return [a], lambda: apply("masked_fill", a, mask, value=0.0)


CASES = {name[len("_case_"):]: fn for name, fn in globals().items() if name.startswith("_case_")}


@pytest.mark.parametrize("kind", sorted(CASES))
def test_every_kind_matches_central_differences(kind):
    worst = 0.0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        params, build = CASES[kind](rng)
        objective = projected(build(), rng)
        worst = max(worst, grad_check(lambda: objective(build()), params, epsilon=1e-5))
    assert worst < 1e-6, f"{kind}: {worst}"


def test_matmul_identity():
    m = np.random.default_rng(0).normal(size=(3, 3))
    assert np.array_equal(ops.matmul(Tensor(np.eye(3)), Tensor(m)).data, m)


def test_exp_of_zeros_is_ones():
    assert np.array_equal(ops.exp(Tensor(np.zeros((2, 2)))).data, np.ones((2, 2)))


def test_softmax_of_equal_inputs_is_uniform():
    out = ops.softmax(Tensor(np.ones(3)), axis=0).data
    np.testing.assert_allclose(out, [1 / 3] * 3, rtol=0, atol=1e-15)


def test_matmul_matches_triple_loop():
    rng = np.random.default_rng(1)
    a, b = rng.normal(size=(4, 5)), rng.normal(size=(5, 3))
    got = ops.matmul(Tensor(a), Tensor(b)).data
    assert np.max(np.abs(got - matmul_loops(a, b))) < 1e-12


def test_softmax_sums_to_one_and_ignores_shift():
    rng = np.random.default_rng(2)
    for _ in range(20):
        x = rng.normal(scale=10.0, size=(4, 7))
        for axis in (0, 1):
            s = ops.softmax(Tensor(x), axis=axis).data
            assert np.max(np.abs(s.sum(axis=axis) - 1.0)) < 1e-12
            shifted = ops.softmax(Tensor(x + rng.normal(scale=50.0)), axis=axis).data
            assert np.max(np.abs(shifted - s)) < 1e-12


def test_softmax_handles_huge_logits():
    out = ops.softmax(Tensor(np.array([1000.0, 1000.0, -1000.0])), axis=0).data
    assert np.all(np.isfinite(out))
    np.testing.assert_allclose(out, [0.5, 0.5, 0.0], atol=1e-300)


def test_gradient_of_sum_is_ones():
    p = Parameter(np.arange(6.0).reshape(2, 3), "p")
    backward(ops.sum(p))
    assert np.array_equal(p.grad, np.ones((2, 3)))


def test_gradient_of_sum_of_squares():
    p = Parameter(np.array([1.0, 2.0]), "p")
    backward(ops.sum(p * p))
    assert np.array_equal(p.grad, [2.0, 4.0])


def test_sum_of_squares_grad_check_is_tight():
    rng = np.random.default_rng(3)
    p = P(rng, 3, 3)
    assert grad_check(lambda: ops.sum(ops.square(p)), [p]) < 1e-9


def test_gradients_are_linear_in_the_loss():
    rng = np.random.default_rng(4)
    a, b = P(rng, 3, 4, name="a"), P(rng, 4, 2, name="b")

    def loss1():
        return ops.sum(ops.exp(ops.matmul(a, b)))

    def loss2():
        return ops.sum(ops.softmax(ops.matmul(a, b), axis=0) * 3.0)

    grads = []
    for fn in (loss1, loss2, lambda: loss1() + loss2()):
        a.zero_grad()
        b.zero_grad()
        backward(fn())
        grads.append((a.grad.copy(), b.grad.copy()))
    for i in range(2):
        assert np.max(np.abs(grads[2][i] - (grads[0][i] + grads[1][i]))) < 1e-12


def test_reused_parameter_accumulates():
    p = Parameter(np.array([3.0]), "p")
    backward(ops.sum(p * 2.0 + p * 5.0))
    assert p.grad[0] == 7.0


def test_unreachable_parameter_keeps_zero_gradient():
    p, q = Parameter(np.ones(2), "p"), Parameter(np.ones(2), "q")
    backward(ops.sum(p))
    assert np.array_equal(q.grad, np.zeros(2))


def test_backward_requires_a_scalar():
    p = Parameter(np.ones(3), "p")
    with pytest.raises(ContractError):
        backward(p * 2.0)


def test_no_grad_records_nothing():
    p = Parameter(np.ones(3), "p")
    with no_grad():
        out = p * 2.0
    assert not out.requires_grad


def test_shape_error_names_kind_and_shapes():
    with pytest.raises(ShapeError, match=r"matmul.*\(2, 3\).*\(4, 5\)"):
        ops.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 5))))


def test_gather_out_of_range_is_index_error():
    with pytest.raises(IndexError):
        ops.gather(Tensor(np.ones((4, 2))), np.array([0, 4]))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_grad_check_rejects_nan():
    p = Parameter(np.array([-1.0]), "p")
    with pytest.raises(NumericError):
        grad_check(lambda: ops.sum(ops.log(p)), [p])


def test_float32_stays_float32():
    a = Tensor(np.ones((2, 2), dtype=np.float32))
    assert ops.softmax(a * 0.5 + 1.0, axis=0).data.dtype == np.float32
