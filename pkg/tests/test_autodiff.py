import numpy as np
import pytest

from uwdiff import autodiff as ad
from uwdiff.autodiff import Tensor
from uwdiff.errors import ShapeMismatchError

from oracles import conv2d_loop


def fd_grad(fn, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central finite differences of a scalar fn over every entry of x."""
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        f_plus = fn()
        flat[i] = orig - h
        f_minus = fn()
        flat[i] = orig
        out[i] = (f_plus - f_minus) / (2 * h)
    return grad


def check_op(build, *shapes, seed=0, atol=1e-6):
    """build(*tensors) -> scalar Tensor; verifies every input's gradient."""
    gen = np.random.default_rng(seed)
    arrays = [gen.uniform(0.2, 1.5, s) for s in shapes]
    tensors = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    build(*tensors).backward()

    def value() -> float:
        return build(*[Tensor(a) for a in arrays]).item()

    for tensor, array in zip(tensors, arrays):
        fd = fd_grad(value, array)
        assert tensor.grad is not None
        assert np.allclose(tensor.grad, fd, atol=atol), (tensor.grad, fd)


class TestElementwiseOps:
    def test_add_broadcast(self):
        check_op(lambda a, b: ad.tsum(a + b), (3, 4), (4,))

    def test_sub(self):
        check_op(lambda a, b: ad.tsum(a - b), (2, 3), (2, 3))

    def test_mul_broadcast(self):
        check_op(lambda a, b: ad.tsum(a * b), (2, 3, 2), (3, 1))

    def test_div(self):
        check_op(lambda a, b: ad.tsum(a / b), (4,), (4,))

    def test_power(self):
        check_op(lambda a: ad.tsum(a**3.0), (5,))

    def test_sqrt_exp_log_tanh_sigmoid(self):
        check_op(lambda a: ad.tsum(ad.sqrt(a)), (4,))
        check_op(lambda a: ad.tsum(ad.exp(a)), (4,))
        check_op(lambda a: ad.tsum(ad.log(a)), (4,))
        check_op(lambda a: ad.tsum(ad.tanh(a)), (4,))
        check_op(lambda a: ad.tsum(ad.sigmoid(a)), (4,))

    def test_absolute(self):
        check_op(lambda a: ad.tsum(ad.absolute(a)), (6,))

    def test_clip_interior_gradient(self):
        x = Tensor(np.array([0.5, 2.0, -1.0]), requires_grad=True)
        ad.tsum(ad.clip(x, 0.0, 1.0)).backward()
        assert np.array_equal(x.grad, [1.0, 0.0, 0.0])


class TestReductionsAndShaping:
    def test_sum_axis(self):
        check_op(lambda a: ad.tsum(ad.tsum(a, axis=1) * 2.0), (3, 4))

    def test_sum_axis_tuple(self):
        check_op(lambda a: ad.tsum(ad.tsum(a, axis=(1, 2)) * 1.5), (2, 3, 4))

    def test_mean(self):
        check_op(lambda a: ad.tmean(a), (3, 5))

    def test_mean_axis(self):
        check_op(lambda a: ad.tsum(ad.tmean(a, axis=0)), (4, 3))

    def test_reshape(self):
        check_op(lambda a: ad.tsum(ad.reshape(a, (6,)) * 3.0), (2, 3))

    def test_concat(self):
        check_op(lambda a, b: ad.tsum(ad.concat([a, b], axis=0) ** 2.0), (2, 3), (4, 3))


class TestMatmul:
    def test_matrix_vector(self):
        check_op(lambda a, b: ad.tsum(a @ b), (3, 4), (4,))

    def test_matrix_matrix(self):
        check_op(lambda a, b: ad.tsum(a @ b), (3, 4), (4, 2))

    def test_vector_vector(self):
        check_op(lambda a, b: a @ b, (5,), (5,))

    def test_vector_matrix(self):
        check_op(lambda a, b: ad.tsum(a @ b), (3,), (3, 4))


class TestConv2d:
    @pytest.mark.parametrize("stride,padding", [(1, 0), (1, 1), (2, 1), (2, 0)])
    def test_forward_matches_loop_oracle(self, stride, padding, rng):
        x = rng.standard_normal((3, 8, 9))
        w = rng.standard_normal((4, 3, 3, 3))
        b = rng.standard_normal(4)
        out = ad.conv2d(Tensor(x), Tensor(w), Tensor(b), stride=stride, padding=padding)
        ref = conv2d_loop(x, w, b, stride, padding)
        assert np.allclose(out.data, ref, atol=1e-12)

    @pytest.mark.parametrize("stride,padding", [(1, 1), (2, 1)])
    def test_gradients(self, stride, padding):
        check_op(
            lambda x, w, b: ad.tsum(ad.conv2d(x, w, b, stride=stride, padding=padding) ** 2.0),
            (2, 6, 5),
            (3, 2, 3, 3),
            (3,),
            atol=1e-5,
        )

    def test_channel_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            ad.conv2d(Tensor(np.zeros((2, 4, 4))), Tensor(np.zeros((1, 3, 3, 3))))


class TestGraphMechanics:
    def test_backward_requires_scalar(self):
        x = Tensor(np.ones(3), requires_grad=True)
        with pytest.raises(ShapeMismatchError):
            (x * 2.0).backward()

    def test_grad_accumulates_over_shared_node(self):
        x = Tensor(np.array(2.0), requires_grad=True)
        y = x * x  # dy/dx = 2x through two paths
        y.backward()
        assert x.grad == pytest.approx(4.0)

    def test_constants_collect_no_grad(self):
        x = Tensor(np.ones(3), requires_grad=True)
        c = Tensor(np.ones(3))
        ad.tsum(x * c).backward()
        assert c.grad is None or np.array_equal(c.grad, np.ones(3))
        assert np.array_equal(x.grad, np.ones(3))

    def test_repeated_backward_resets_grads(self):
        x = Tensor(np.array(3.0), requires_grad=True)

        def run():
            out = x * x
            out.backward()
            return x.grad

        assert run() == pytest.approx(run())
