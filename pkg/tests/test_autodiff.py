import numpy as np
import pytest

from cfgnn import autodiff as ad
from cfgnn.errors import DomainError, GraphError, ShapeMismatchError

from oracles import fd_gradient, max_rel_err


def scalarize(x):
    """Reduce any tensor to a scalar with nontrivial weights."""
    flat = ad.reshape(x, (-1,))
    w = x.tape.constant(np.linspace(0.5, 1.5, flat.shape[0]))
    return ad.reduce_sum(ad.mul(flat, w), axis=0)


class TestForward:
    def test_add_mul_values(self):
        tape = ad.Tape()
        a = tape.leaf([[1.0, 2.0], [3.0, 4.0]])
        b = tape.leaf([[10.0, 20.0], [30.0, 40.0]])
        np.testing.assert_allclose((a + b).value, [[11, 22], [33, 44]])
        np.testing.assert_allclose(ad.mul(a, b).value, [[10, 40], [90, 160]])

    def test_broadcasting_stretches_unit_axes(self):
        tape = ad.Tape()
        a = tape.leaf(np.ones((2, 1, 3)))
        b = tape.leaf(np.arange(4.0).reshape(1, 4, 1))
        out = a + b
        assert out.shape == (2, 4, 3)

    def test_shape_mismatch_names_shapes(self):
        tape = ad.Tape()
        a = tape.leaf(np.ones((2, 3)))
        b = tape.leaf(np.ones((4, 5)))
        with pytest.raises(ShapeMismatchError) as err:
            ad.add(a, b)
        assert "(2, 3)" in str(err.value) and "(4, 5)" in str(err.value)

    def test_matmul_trailing_axis(self):
        tape = ad.Tape()
        x = tape.leaf(np.arange(24.0).reshape(2, 3, 4))
        w = tape.leaf(np.arange(8.0).reshape(4, 2))
        out = ad.matmul(x, w)
        assert out.shape == (2, 3, 2)
        np.testing.assert_allclose(out.value, x.value @ w.value)

    def test_matmul_rejects_bad_inner_dim(self):
        tape = ad.Tape()
        x = tape.leaf(np.ones((2, 3)))
        w = tape.leaf(np.ones((4, 2)))
        with pytest.raises(ShapeMismatchError):
            ad.matmul(x, w)

    def test_matmul_rejects_high_rank_weight(self):
        tape = ad.Tape()
        x = tape.leaf(np.ones((2, 3)))
        w = tape.leaf(np.ones((3, 2, 2)))
        with pytest.raises(ShapeMismatchError):
            ad.matmul(x, w)

    def test_domain_guards(self):
        tape = ad.Tape()
        with pytest.raises(DomainError):
            ad.sqrt(tape.leaf([-1.0]))
        with pytest.raises(DomainError):
            ad.log2_1p(tape.leaf([-0.5]))
        with pytest.raises(DomainError):
            ad.div(tape.leaf([1.0]), tape.leaf([0.0]))
        with pytest.raises(DomainError):
            tape.leaf(np.array([1 + 2j]))

    def test_log2_1p_value(self):
        tape = ad.Tape()
        x = tape.leaf([0.0, 1.0, 3.0])
        np.testing.assert_allclose(ad.log2_1p(x).value, [0.0, 1.0, 2.0])

    def test_finite_forward_on_finite_inputs(self):
        gen = np.random.default_rng(5)
        tape = ad.Tape()
        x = tape.leaf(gen.normal(size=(50,)) * 100)
        for out in (ad.sigmoid(x), ad.relu(x), ad.square(x)):
            assert np.all(np.isfinite(out.value))

    def test_concat_and_narrow_roundtrip(self):
        tape = ad.Tape()
        a = tape.leaf(np.arange(6.0).reshape(2, 3))
        b = tape.leaf(np.arange(6.0, 14.0).reshape(2, 4))
        cat = ad.concat([a, b], axis=1)
        assert cat.shape == (2, 7)
        np.testing.assert_allclose(ad.narrow(cat, 1, 3, 7).value, b.value)

    def test_non_scalar_backward_rejected(self):
        tape = ad.Tape()
        x = tape.leaf(np.ones((2, 2)), trainable=True)
        with pytest.raises(GraphError):
            tape.backward(ad.relu(x))

    def test_cross_tape_rejected(self):
        t1, t2 = ad.Tape(), ad.Tape()
        with pytest.raises(GraphError):
            ad.add(t1.leaf([1.0]), t2.leaf([1.0]))


def op_cases():
    """(name, build, input shape) table; build maps a leaf tensor to a scalar."""
    return [
        ("add", lambda t, x: scalarize(x + t.constant(np.full(x.shape, 0.7))), (3, 4)),
        ("sub", lambda t, x: scalarize(t.constant(np.full(x.shape, 0.7)) - x), (3, 4)),
        ("mul", lambda t, x: scalarize(ad.mul(x, x)), (3, 4)),
        ("div", lambda t, x: scalarize(ad.div(t.constant(np.ones(x.shape)), x)), (3, 4)),
        ("matmul", lambda t, x: scalarize(ad.matmul(x, t.constant(np.linspace(-1, 1, 8).reshape(4, 2)))), (2, 3, 4)),
        ("reduce_sum", lambda t, x: scalarize(ad.reduce_sum(x, axis=1, keepdims=True)), (3, 4, 2)),
        ("reduce_sum_multi", lambda t, x: ad.reduce_sum(ad.square(x), axis=(0, 1, 2)), (2, 3, 2)),
        ("sigmoid", lambda t, x: scalarize(ad.sigmoid(x)), (5, 3)),
        ("relu", lambda t, x: scalarize(ad.relu(x)), (5, 3)),
        ("square", lambda t, x: scalarize(ad.square(x)), (4, 4)),
        ("sqrt", lambda t, x: scalarize(ad.sqrt(ad.square(x) + t.constant(np.full(x.shape, 0.5)))), (4, 3)),
        ("log2_1p", lambda t, x: scalarize(ad.log2_1p(ad.square(x))), (4, 3)),
        ("broadcast", lambda t, x: scalarize(ad.broadcast_to(x, (5,) + x.shape)), (2, 3)),
        ("reshape", lambda t, x: scalarize(ad.reshape(x, (6, 2))), (3, 4)),
        ("concat", lambda t, x: scalarize(ad.concat([x, ad.square(x)], axis=0)), (2, 3)),
        ("narrow", lambda t, x: scalarize(ad.narrow(x, 1, 1, 3)), (3, 4)),
        ("scale", lambda t, x: scalarize(ad.scale(x, -2.5)), (3, 4)),
        ("chain", lambda t, x: ad.reduce_sum(ad.log2_1p(ad.square(ad.matmul(ad.sigmoid(x), t.constant(np.linspace(0.1, 1.0, 6).reshape(3, 2))))), axis=(0, 1)), (4, 3)),
    ]


class TestBackwardAgainstFiniteDifferences:
    @pytest.mark.parametrize("name,build,shape", op_cases(), ids=[c[0] for c in op_cases()])
    def test_op_gradient(self, name, build, shape):
        for seed in range(3):
            gen = np.random.default_rng(100 + seed)
            x0 = gen.normal(size=shape) + 0.15  # nudge away from relu kinks
            tape = ad.Tape()
            x = tape.leaf(x0, trainable=True)
            loss = build(tape, x)
            grad = tape.backward(loss)[x]

            def f(xv, build=build):
                t = ad.Tape()
                return float(build(t, t.leaf(xv)).value)

            fd = fd_gradient(f, x0, h=1e-5)
            assert max_rel_err(grad, fd, floor=1e-6) < 1e-4, name

    def test_reused_operand_accumulates(self):
        gen = np.random.default_rng(11)
        x0 = gen.normal(size=(3, 3))

        def build(t, x):
            y = ad.mul(x, ad.sigmoid(x))
            return ad.reduce_sum(y + ad.square(x), axis=(0, 1))

        tape = ad.Tape()
        x = tape.leaf(x0, trainable=True)
        grad = tape.backward(build(tape, x))[x]

        def f(v):
            t = ad.Tape()
            return float(build(t, t.leaf(v)).value)

        fd = fd_gradient(f, x0)
        assert max_rel_err(grad, fd, floor=1e-6) < 1e-4


class TestBackwardSemantics:
    def test_sum_sigmoid_matches_closed_form(self):
        gen = np.random.default_rng(3)
        x0 = gen.normal(size=(20,))
        tape = ad.Tape()
        x = tape.leaf(x0, trainable=True)
        grad = tape.backward(ad.reduce_sum(ad.sigmoid(x), axis=0))[x]
        s = 1.0 / (1.0 + np.exp(-x0))
        np.testing.assert_allclose(grad, s * (1 - s), rtol=1e-12)

    def test_untouched_leaf_gets_zeros(self):
        tape = ad.Tape()
        x = tape.leaf([1.0, 2.0], trainable=True)
        unused = tape.leaf(np.ones((3, 3)), trainable=True)
        grads = tape.backward(ad.reduce_sum(ad.square(x), axis=0))
        np.testing.assert_allclose(grads[x], [2.0, 4.0])
        np.testing.assert_allclose(grads[unused], np.zeros((3, 3)))

    def test_non_trainable_leaf_not_in_gradients(self):
        tape = ad.Tape()
        x = tape.leaf([1.0], trainable=True)
        c = tape.constant([2.0])
        grads = tape.backward(ad.reduce_sum(ad.mul(x, c), axis=0))
        with pytest.raises(GraphError):
            grads[c]

    def test_node_ids_strictly_increase(self):
        tape = ad.Tape()
        x = tape.leaf(np.ones(3))
        y = ad.sigmoid(x)
        z = ad.reduce_sum(y, axis=0)
        ids = [n.uid for n in tape.nodes]
        assert ids == sorted(ids) and len(set(ids)) == len(ids)
        assert x.uid < y.uid < z.uid


class TestStraightThroughGate:
    def test_forward_masks_backward_passes(self):
        tape = ad.Tape()
        a = tape.leaf([0.2, 0.5, 0.9], trainable=True)
        gated = ad.ste_gate(a, 0.5)
        # Strictly above the threshold is retained.
        np.testing.assert_allclose(gated.value, [0.0, 0.0, 0.9])
        w = tape.constant([1.0, 2.0, 3.0])
        grads = tape.backward(ad.reduce_sum(ad.mul(gated, w), axis=0))
        np.testing.assert_allclose(grads[a], [1.0, 2.0, 3.0])

    def test_gate_composes_with_sigmoid(self):
        tape = ad.Tape()
        w = tape.leaf([-2.0, 0.0, 2.0], trainable=True)
        a = ad.sigmoid(w)
        gated = ad.ste_gate(a, 0.6)
        loss = ad.reduce_sum(gated, axis=0)
        grads = tape.backward(loss)
        # Straight through the mask, then the ordinary sigmoid derivative.
        s = 1.0 / (1.0 + np.exp(-w.value))
        np.testing.assert_allclose(grads[w], s * (1 - s), rtol=1e-12)
