import numpy as np
import pytest

from bwbdesign import autodiff as ad

from util import fd_gradient, gradcheck, rel_err


def random_input(rng, rows, cols, keep_away_from_zero=False):
    x = rng.standard_normal((rows, cols))
    if keep_away_from_zero:
        x = np.where(np.abs(x) < 1e-2, np.sign(x) * 1e-2 + x, x)
    return x


class TestForwardValues:
    def test_silu_zero(self):
        tape = ad.Tape()
        out = ad.silu(tape.leaf([[0.0]]))
        assert out.value[0, 0] == 0.0

    def test_layer_norm_constant_row_is_zero(self):
        tape = ad.Tape()
        out = ad.layer_norm(tape.leaf(np.full((2, 8), 3.7)))
        assert np.allclose(out.value, 0.0)

    def test_mse_self_is_zero_with_zero_grad(self):
        tape = ad.Tape()
        x = tape.leaf(np.arange(6.0).reshape(2, 3))
        loss = ad.mse(x, x.value.copy())
        assert loss.value[0, 0] == 0.0
        g = ad.backward(tape, loss)
        assert np.allclose(g[x.idx], 0.0)

    def test_shape_mismatch_reports_both_shapes(self):
        tape = ad.Tape()
        a = tape.leaf(np.zeros((2, 3)))
        b = tape.leaf(np.zeros((4, 5)))
        with pytest.raises(ad.ShapeError, match=r"\(2, 3\).*\(4, 5\)"):
            ad.matmul(a, b)

    def test_non_finite_raises(self):
        tape = ad.Tape()
        x = tape.leaf([[1e308]])
        with pytest.raises(ad.NonFiniteError):
            ad.add(x, x)

    def test_scalar_times_weight_grad(self):
        tape = ad.Tape()
        x = tape.leaf([[3.0]])
        w = tape.leaf([[2.5]])
        y = ad.mul(x, w)
        g = ad.backward(tape, y)
        assert g[x.idx][0, 0] == 2.5
        assert g[w.idx][0, 0] == 3.0


class TestGradientChecks:
    """Every layer kind against central finite differences, many seeds."""

    @pytest.mark.parametrize("seed", range(20))
    def test_dense_chain(self, seed):
        rng = np.random.default_rng(seed)
        w1 = rng.standard_normal((6, 8))
        b1 = rng.standard_normal((1, 8))
        w2 = rng.standard_normal((8, 1))

        def build(tape, x):
            h = ad.silu(ad.add(ad.matmul(x, w1), b1))
            return ad.mse(ad.matmul(h, w2), np.zeros((4, 1)))

        assert gradcheck(build, rng.standard_normal((4, 6))) < 1e-5

    @pytest.mark.parametrize("op", [ad.silu, ad.gelu, ad.tanh])
    @pytest.mark.parametrize("seed", range(5))
    def test_smooth_elementwise(self, op, seed):
        rng = np.random.default_rng(100 + seed)
        build = lambda tape, x: ad.mse(op(x), np.zeros((3, 5)))
        assert gradcheck(build, rng.standard_normal((3, 5))) < 1e-5

    @pytest.mark.parametrize("seed", range(5))
    def test_relu_away_from_kink(self, seed):
        rng = np.random.default_rng(200 + seed)
        x0 = random_input(rng, 3, 5, keep_away_from_zero=True)
        build = lambda tape, x: ad.mse(ad.relu(x), np.zeros((3, 5)))
        assert gradcheck(build, x0) < 1e-5

    @pytest.mark.parametrize("seed", range(20))
    def test_layer_norm(self, seed):
        rng = np.random.default_rng(300 + seed)
        t = rng.standard_normal((4, 8))
        build = lambda tape, x: ad.mse(ad.layer_norm(x), t)
        assert gradcheck(build, rng.standard_normal((4, 8))) < 1e-5

    @pytest.mark.parametrize("seed", range(5))
    def test_concat_and_repeat(self, seed):
        rng = np.random.default_rng(400 + seed)
        other = rng.standard_normal((6, 3))

        def build(tape, x):
            rep = ad.repeat_rows(x, 3)                  # (2,4) -> (6,4)
            j = ad.concat(rep, tape.leaf(other))        # (6,7)
            return ad.mse(j, np.zeros((6, 7)))

        assert gradcheck(build, rng.standard_normal((2, 4))) < 1e-5

    @pytest.mark.parametrize("seed", range(5))
    def test_affine_scale_sub(self, seed):
        rng = np.random.default_rng(500 + seed)
        s = rng.standard_normal(5)
        t = rng.standard_normal(5)

        def build(tape, x):
            y = ad.affine(x, s, t)
            y = ad.scale(y, -1.7)
            y = ad.sub(y, np.ones((3, 5)))
            return ad.mse(y, np.zeros((3, 5)))

        assert gradcheck(build, rng.standard_normal((3, 5))) < 1e-5

    @pytest.mark.parametrize("seed", range(20))
    def test_film_layer_block(self, seed):
        """FiLM-style modulated layer: gamma*h + beta then linear + SiLU."""
        rng = np.random.default_rng(600 + seed)
        w = rng.standard_normal((6, 6))
        b = rng.standard_normal((1, 6))
        gamma = rng.standard_normal((4, 6))
        beta = rng.standard_normal((4, 6))

        def build(tape, x):
            h = x
            mod = ad.add(ad.mul(tape.leaf(gamma), h), tape.leaf(beta))
            out = ad.silu(ad.add(ad.matmul(mod, w), b))
            return ad.mse(out, np.zeros((4, 6)))

        assert gradcheck(build, rng.standard_normal((4, 6))) < 1e-5

    def test_row_broadcast_bias_grad(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((5, 3))
        tape = ad.Tape()
        b = tape.leaf(rng.standard_normal((1, 3)))
        loss = ad.mse(ad.add(tape.leaf(x), b), np.zeros((5, 3)))
        g = ad.backward(tape, loss)

        def scalar(bv):
            t2 = ad.Tape()
            return float(ad.mse(ad.add(t2.leaf(x), t2.leaf(bv)), np.zeros((5, 3))).value[0, 0])

        assert rel_err(g[b.idx], fd_gradient(scalar, b.value)) < 1e-5


class TestBackwardContract:
    def test_non_scalar_output_rejected(self):
        tape = ad.Tape()
        x = tape.leaf(np.ones((2, 2)))
        with pytest.raises(ValueError, match="scalar"):
            ad.backward(tape, x)

    def test_fan_out_accumulates(self):
        tape = ad.Tape()
        x = tape.leaf([[2.0]])
        y = ad.add(ad.mul(x, x), x)  # x^2 + x -> dy/dx = 2x + 1 = 5
        g = ad.backward(tape, y)
        assert g[x.idx][0, 0] == pytest.approx(5.0)


class TestAdam:
    def test_zero_grad_no_decay_leaves_params(self):
        params = {"w": np.ones((2, 2))}
        state = ad.AdamState.for_params(params, lr=0.1)
        ad.adam_step(params, {"w": np.zeros((2, 2))}, state)
        assert np.array_equal(params["w"], np.ones((2, 2)))

    def test_quadratic_convergence(self):
        # minimize (x - 3)^2 from 0 with lr=0.05
        params = {"x": np.array([[0.0]])}
        state = ad.AdamState.for_params(params, lr=0.05)
        for _ in range(500):
            g = 2.0 * (params["x"] - 3.0)
            ad.adam_step(params, {"x": g}, state)
        assert abs(params["x"][0, 0] - 3.0) < 1e-3

    def test_decoupled_decay_shrinks(self):
        lam, lr = 0.1, 0.05
        params = {"w": np.full((2, 2), 4.0)}
        state = ad.AdamState.for_params(params, lr=lr, weight_decay=lam)
        ad.adam_step(params, {"w": np.zeros((2, 2))}, state)
        assert np.allclose(params["w"], 4.0 * (1 - lr * lam))

    def test_deterministic_trajectory(self):
        def run():
            rng = np.random.default_rng(9)
            params = {"w": rng.standard_normal((3, 3))}
            state = ad.AdamState.for_params(params, lr=0.01)
            for _ in range(50):
                g = params["w"] ** 2 - 0.3 * params["w"]
                ad.adam_step(params, {"w": g}, state)
            return params["w"]

        assert np.array_equal(run(), run())


class TestSinusoidalEmbed:
    def test_t_zero(self):
        e = ad.sinusoidal_embed(0, 16)[0]
        assert np.array_equal(e[0::2], np.zeros(8))
        assert np.array_equal(e[1::2], np.ones(8))

    def test_bounded(self):
        e = ad.sinusoidal_embed(np.arange(1000), 32)
        assert np.all(np.abs(e) <= 1.0)

    def test_odd_dim_rejected(self):
        with pytest.raises(ValueError):
            ad.sinusoidal_embed(0, 7)

    def test_pairwise_distinct_over_full_range(self):
        # brute-force pairwise check at T=1000, dim=8
        e = ad.sinusoidal_embed(np.arange(1000), 8)
        d = np.linalg.norm(e[:, None, :] - e[None, :, :], axis=-1)
        d[np.diag_indices(1000)] = np.inf
        assert d.min() > 0.0
