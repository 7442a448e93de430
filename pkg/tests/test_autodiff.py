import numpy as np
import pytest

from dlgparse.autodiff import (CheckpointError, GraphError, GruCellParams,
                               ShapeError, Tape, Tensor, backward, gru_cell,
                               load_checkpoint, save_checkpoint, sgd_step)

from helpers import assert_grads_close, finite_difference, gru_reference


def test_matmul_identity():
    t = Tape()
    eye = Tensor(np.eye(2))
    a = Tensor([[1.0, 2.0], [3.0, 4.0]])
    assert np.array_equal(t.matmul(eye, a).data, a.data)


def test_matmul_zero():
    t = Tape()
    z = Tensor(np.zeros((2, 3)))
    b = Tensor(np.arange(12.0).reshape(3, 4))
    assert np.array_equal(t.matmul(z, b).data, np.zeros((2, 4)))


def test_matmul_against_triple_loop():
    rng = np.random.default_rng(0)
    for _ in range(10):
        m, k, n = rng.integers(1, 5, size=3)
        a = rng.standard_normal((m, k))
        b = rng.standard_normal((k, n))
        expected = np.zeros((m, n))
        for i in range(m):
            for j in range(n):
                for l in range(k):
                    expected[i, j] += a[i, l] * b[l, j]
        got = Tape().matmul(Tensor(a), Tensor(b)).data
        assert np.allclose(got, expected, atol=1e-12)
    # frozen instance from the triple-loop oracle
    got = Tape().matmul(Tensor([[1.0, 2.0], [3.0, 4.0]]), Tensor([[5.0], [6.0]])).data
    assert np.array_equal(got, [[17.0], [39.0]])


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 2\)"):
        Tape().matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 2))))


def test_elementwise_shape_errors():
    t = Tape()
    a, b = Tensor(np.zeros(3)), Tensor(np.zeros(4))
    for op in (t.add, t.sub, t.mul):
        with pytest.raises(ShapeError):
            op(a, b)


class TestSoftmax:
    def test_symmetry(self):
        out = Tape().softmax(Tensor([0.0, 0.0, 0.0])).data
        assert np.allclose(out, [1 / 3] * 3, atol=1e-12)

    def test_shift_invariance(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            v = rng.standard_normal(5) * 3
            c = rng.standard_normal() * 10
            a = Tape().softmax(Tensor(v)).data
            b = Tape().softmax(Tensor(v + c)).data
            assert np.allclose(a, b, atol=1e-12)

    def test_reference_values(self):
        # direct exp/sum computation of softmax([1, 2, 3])
        out = Tape().softmax(Tensor([1.0, 2.0, 3.0])).data
        assert np.allclose(out, [0.0900, 0.2447, 0.6652], atol=1e-4)

    def test_empty_is_domain_error(self):
        with pytest.raises(ShapeError):
            Tape().softmax(Tensor(np.zeros(0)))

    def test_distribution_for_large_magnitudes(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            v = rng.uniform(-1e4, 1e4, size=rng.integers(1, 8))
            out = Tape().softmax(Tensor(v)).data
            assert (out >= 0).all()
            assert abs(out.sum() - 1.0) < 1e-6


class TestGruCell:
    def _zero_params(self, d_in=3, d_h=4):
        z = lambda *s: Tensor(np.zeros(s), requires_grad=True)
        return GruCellParams(d_in, d_h,
                             z(d_h, d_in), z(d_h, d_h), z(d_h),
                             z(d_h, d_in), z(d_h, d_h), z(d_h),
                             z(d_h, d_in), z(d_h, d_h), z(d_h))

    def test_all_zero(self):
        p = self._zero_params()
        out = gru_cell(Tape(), Tensor(np.ones(3)), Tensor(np.zeros(4)), p)
        assert np.array_equal(out.data, np.zeros(4))

    def test_zero_params_halve_state(self):
        # zero weights make both gates 0.5 and the candidate zero
        p = self._zero_params()
        h = np.array([1.0, -2.0, 3.0, 0.5])
        out = gru_cell(Tape(), Tensor(np.ones(3)), Tensor(h), p)
        assert np.allclose(out.data, 0.5 * h, atol=1e-12)

    def test_matches_straight_line_reference(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            d_in, d_h = int(rng.integers(1, 6)), int(rng.integers(1, 6))
            p = GruCellParams.create(d_in, d_h, rng, scale=0.5)
            x = rng.standard_normal(d_in)
            h = rng.standard_normal(d_h)
            out = gru_cell(Tape(), Tensor(x), Tensor(h), p)
            assert np.allclose(out.data, gru_reference(x, h, p), atol=1e-6)

    def test_shape_mismatch(self):
        p = self._zero_params(3, 4)
        with pytest.raises(ShapeError):
            gru_cell(Tape(), Tensor(np.zeros(5)), Tensor(np.zeros(4)), p)

    def test_cell_param_validation(self):
        with pytest.raises(ShapeError, match="w_z"):
            z = lambda *s: Tensor(np.zeros(s))
            GruCellParams(3, 4, z(4, 2), z(4, 4), z(4), z(4, 3), z(4, 4), z(4),
                          z(4, 3), z(4, 4), z(4))


class TestBackward:
    def test_sum_matmul_finite_differences(self):
        rng = np.random.default_rng(4)
        a = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
        b = Tensor(rng.standard_normal((4, 2)), requires_grad=True)
        tape = Tape()
        loss = tape.sum(tape.matmul(a, b))
        grads = backward(tape, loss)

        def loss_fn():
            t = Tape()
            return t.sum(t.matmul(a, b)).item()

        num = finite_difference(loss_fn, [a.data, b.data])
        assert_grads_close(grads[a.id], num[0])
        assert_grads_close(grads[b.id], num[1])

    def test_nll_softmax_closed_form(self):
        v = Tensor([0.3, -1.2, 2.0, 0.1], requires_grad=True)
        tape = Tape()
        probs = tape.softmax(v)
        loss = tape.nll(probs, 2)
        grads = backward(tape, loss)
        expected = probs.data - np.eye(4)[2]
        assert np.allclose(grads[v.id], expected, atol=1e-12)

    def test_three_step_gru_chain_finite_differences(self):
        rng = np.random.default_rng(5)
        p = GruCellParams.create(2, 3, rng, scale=0.4)
        xs = [rng.standard_normal(2) for _ in range(3)]

        def forward():
            t = Tape()
            h = Tensor(np.zeros(3))
            for x in xs:
                h = gru_cell(t, Tensor(x), h, p)
            return t, t.sum(h)

        tape, loss = forward()
        grads = backward(tape, loss)
        arrays = [t.data for _, t in p.named("p")]
        num = finite_difference(lambda: forward()[1].item(), arrays)
        for (_, tensor), n in zip(p.named("p"), num):
            assert_grads_close(grads[tensor.id], n)

    def test_unused_tensor_gets_zero_gradient(self):
        a = Tensor(np.ones(3), requires_grad=True)
        b = Tensor(np.ones(3), requires_grad=True)
        tape = Tape()
        tape.mul(b, b)  # on the tape but not feeding the loss
        loss = tape.sum(a)
        grads = backward(tape, loss)
        assert np.array_equal(grads[b.id], np.zeros(3))

    def test_loss_not_on_tape(self):
        tape = Tape()
        tape.sum(Tensor(np.ones(2)))
        with pytest.raises(GraphError):
            backward(tape, Tensor(1.0))

    def test_non_scalar_loss_rejected(self):
        tape = Tape()
        out = tape.add(Tensor(np.ones(2)), Tensor(np.ones(2)))
        with pytest.raises(GraphError):
            backward(tape, out)


def _random_op_instances(op_name, rng):
    """Build (forward closure, list of leaf tensors) pairs per operation."""
    if op_name == "matmul":
        a = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
        b = Tensor(rng.standard_normal((4, 2)), requires_grad=True)
        return lambda t: t.matmul(a, b), [a, b]
    if op_name == "matvec":
        a = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
        b = Tensor(rng.standard_normal(4), requires_grad=True)
        return lambda t: t.matmul(a, b), [a, b]
    if op_name == "add":
        a = Tensor(rng.standard_normal(5), requires_grad=True)
        b = Tensor(rng.standard_normal(5), requires_grad=True)
        return lambda t: t.add(a, b), [a, b]
    if op_name == "sub":
        a = Tensor(rng.standard_normal(5), requires_grad=True)
        b = Tensor(rng.standard_normal(5), requires_grad=True)
        return lambda t: t.sub(a, b), [a, b]
    if op_name == "mul":
        a = Tensor(rng.standard_normal(5), requires_grad=True)
        b = Tensor(rng.standard_normal(5), requires_grad=True)
        return lambda t: t.mul(a, b), [a, b]
    if op_name == "concat":
        a = Tensor(rng.standard_normal(3), requires_grad=True)
        b = Tensor(rng.standard_normal(2), requires_grad=True)
        return lambda t: t.concat([a, b]), [a, b]
    if op_name == "tanh":
        a = Tensor(rng.standard_normal(5), requires_grad=True)
        return lambda t: t.tanh(a), [a]
    if op_name == "sigmoid":
        a = Tensor(rng.standard_normal(5), requires_grad=True)
        return lambda t: t.sigmoid(a), [a]
    if op_name == "softmax":
        a = Tensor(rng.standard_normal(5), requires_grad=True)
        return lambda t: t.softmax(a), [a]
    if op_name == "lookup":
        a = Tensor(rng.standard_normal((4, 3)), requires_grad=True)
        row = int(rng.integers(0, 4))
        return lambda t: t.lookup(a, row), [a]
    if op_name == "nll":
        a = Tensor(rng.uniform(0.1, 1.0, 5), requires_grad=True)
        k = int(rng.integers(0, 5))
        return lambda t: t.nll(a, k), [a]
    raise AssertionError(op_name)


OPS = ["matmul", "matvec", "add", "sub", "mul", "concat", "tanh", "sigmoid",
       "softmax", "lookup", "nll"]


@pytest.mark.parametrize("op_name", OPS)
def test_op_gradients_match_finite_differences(op_name):
    rng = np.random.default_rng(hash(op_name) % 2**32)
    for _ in range(20):
        forward, leaves = _random_op_instances(op_name, rng)
        # reduce to a scalar through a fixed random weighting
        tape = Tape()
        out = forward(tape)
        w = Tensor(rng.standard_normal(out.shape))
        loss = tape.sum(tape.mul(out, w)) if out.shape else out
        grads = backward(tape, loss)

        def loss_fn():
            t = Tape()
            o = forward(t)
            return (t.sum(t.mul(o, w)) if o.shape else o).item()

        num = finite_difference(loss_fn, [l.data for l in leaves])
        for leaf, n in zip(leaves, num):
            assert_grads_close(grads[leaf.id], n)


def test_dropout_gradient_with_fixed_mask():
    a = Tensor(np.linspace(-1, 1, 6), requires_grad=True)

    def forward():
        t = Tape()
        out = t.dropout(a, 0.5, np.random.default_rng(11))
        return t, t.sum(out)

    tape, loss = forward()
    grads = backward(tape, loss)
    num = finite_difference(lambda: forward()[1].item(), [a.data])
    assert_grads_close(grads[a.id], num[0])


def test_dropout_identity_at_p_zero():
    a = Tensor(np.ones(4))
    out = Tape().dropout(a, 0.0, np.random.default_rng(0))
    assert np.array_equal(out.data, a.data)


def test_dropout_scaling_preserves_expectation():
    rng = np.random.default_rng(12)
    a = Tensor(np.ones(20000))
    out = Tape().dropout(a, 0.5, rng)
    assert abs(out.data.mean() - 1.0) < 0.05
    kept = out.data[out.data > 0]
    assert np.allclose(kept, 2.0)  # inverted dropout scales by 1/(1-p)


def test_forward_and_gradients_bit_identical_across_runs():
    def run():
        rng = np.random.default_rng(21)
        p = GruCellParams.create(3, 4, rng)
        x = Tensor(rng.standard_normal(3))
        t = Tape()
        h = gru_cell(t, t.dropout(x, 0.5, rng), Tensor(np.zeros(4)), p)
        loss = t.sum(h)
        grads = backward(t, loss)
        return h.data.copy(), {name: grads[tensor.id].copy()
                               for name, tensor in p.named("p")}

    h1, g1 = run()
    h2, g2 = run()
    assert np.array_equal(h1, h2)
    for name in g1:
        assert np.array_equal(g1[name], g2[name])


class TestSgdStep:
    def test_direct_formula(self):
        t = Tensor(np.array([1.0]), requires_grad=True)
        sgd_step([t], {t.id: np.array([2.0])}, lr=0.1)
        assert np.allclose(t.data, [0.8])

    def test_zero_gradient_keeps_value(self):
        t = Tensor(np.array([3.0]), requires_grad=True)
        sgd_step([t], {t.id: np.zeros(1)}, lr=0.5)
        assert np.array_equal(t.data, [3.0])

    def test_missing_gradient_treated_as_zero(self):
        t = Tensor(np.array([3.0]), requires_grad=True)
        sgd_step([t], {}, lr=0.5)
        assert np.array_equal(t.data, [3.0])

    def test_two_steps_equal_summed_step(self):
        g1, g2 = np.array([0.5, -1.0]), np.array([2.0, 0.25])
        a = Tensor(np.array([1.0, 1.0]), requires_grad=True)
        sgd_step([a], {a.id: g1}, lr=0.1)
        sgd_step([a], {a.id: g2}, lr=0.1)
        b = Tensor(np.array([1.0, 1.0]), requires_grad=True)
        sgd_step([b], {b.id: g1 + g2}, lr=0.1)
        assert np.allclose(a.data, b.data, atol=1e-15)

    def test_rejects_nonpositive_lr(self):
        with pytest.raises(ValueError):
            sgd_step([], {}, lr=0.0)


class TestCheckpoint:
    def test_round_trip_is_exact(self, tmp_path):
        rng = np.random.default_rng(31)
        arrays = {"w": rng.standard_normal((3, 4)) * 1e-7,
                  "b": rng.standard_normal(5) * 1e9,
                  "scalar": np.array(0.1)}
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, arrays)
        loaded = load_checkpoint(path)
        assert set(loaded) == set(arrays)
        for name in arrays:
            assert loaded[name].shape == arrays[name].shape
            assert np.array_equal(loaded[name], arrays[name])

    def test_magic_header_checked(self, tmp_path):
        path = tmp_path / "bad.ckpt"
        path.write_text("NOT-A-CHECKPOINT\nw\t2\t1.0 2.0\n")
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(CheckpointError):
            load_checkpoint(tmp_path / "absent.ckpt")

    def test_value_count_validated(self, tmp_path):
        path = tmp_path / "short.ckpt"
        path.write_text("DLGPARSE-CKPT-1\nw\t2,2\t1.0 2.0\n")
        with pytest.raises(CheckpointError):
            load_checkpoint(path)
