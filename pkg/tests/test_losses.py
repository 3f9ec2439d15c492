import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from contrailseg.losses import (
    LossParams,
    batch_loss,
    combined_loss,
    dice_loss,
    finite_difference_gradient,
    focal_loss,
    focal_tversky_loss,
    jaccard_loss,
    max_relative_error,
    tversky_loss,
)

G4 = np.array([[1, 1], [0, 0]], dtype=np.uint8)
P4 = np.array([[1.0, 0.0], [1.0, 0.0]])


def scalar_sums(p, g):
    """Plain-Python sums: tp, fn, fp, sum p, sum g."""
    tp = fn = fp = sp = sg = 0.0
    for pi, gi in zip(np.ravel(p).tolist(), np.ravel(g).tolist()):
        tp += pi * gi
        fn += (1 - pi) * gi
        fp += pi * (1 - gi)
        sp += pi
        sg += gi
    return tp, fn, fp, sp, sg


def scalar_dice(p, g, eps, k=2.0):
    tp, _, _, sp, sg = scalar_sums(p, g)
    return 1 - (k * tp + eps) / (sp + sg + eps)


def scalar_tversky(p, g, a, b, eps):
    tp, fn, fp, _, _ = scalar_sums(p, g)
    return (tp + eps) / (tp + a * fn + b * fp + eps)


def scalar_bce(p, g):
    n = p.size
    return sum(-(gi * math.log(pi) + (1 - gi) * math.log(1 - pi))
               for pi, gi in zip(p.ravel().tolist(), g.ravel().tolist())) / n


def random_inputs(rng, size=8):
    p = rng.uniform(0.01, 0.99, size=(size, size))
    g = (rng.uniform(size=(size, size)) < 0.4).astype(np.uint8)
    return p, g


class TestSpotValues:
    def test_dice_conventional(self):
        lp = LossParams(epsilon=1e-6)
        expected = 1 - (2 + 1e-6) / (4 + 1e-6)
        assert dice_loss(P4, G4, lp).value == pytest.approx(expected, abs=1e-15)
        assert dice_loss(P4, G4, lp).value == pytest.approx(scalar_dice(P4, G4, 1e-6), abs=1e-15)

    def test_dice_verbatim(self):
        lp = LossParams(epsilon=1e-6, dice_variant="verbatim")
        expected = 1 - (1 + 1e-6) / (4 + 1e-6)
        assert dice_loss(P4, G4, lp).value == pytest.approx(expected, abs=1e-15)
        assert expected == pytest.approx(0.75, abs=1e-6)

    def test_tversky(self):
        lp = LossParams(alpha=0.7, beta=0.3, epsilon=0.0)
        assert tversky_loss(P4, G4, lp).value == pytest.approx(0.5, abs=1e-15)

    def test_focal_tversky(self):
        lp = LossParams(alpha=0.7, beta=0.3, gamma=4 / 3, epsilon=0.0)
        assert focal_tversky_loss(P4, G4, lp).value == pytest.approx(0.5**0.75, abs=1e-15)
        assert 0.5**0.75 == pytest.approx(0.59460, abs=1e-5)

    def test_jaccard(self):
        lp = LossParams(epsilon=0.0)
        assert jaccard_loss(P4, G4, lp).value == pytest.approx(2 / 3, abs=1e-15)

    def test_focal_single_pixel(self):
        lp = LossParams(focal_alpha=0.25, focal_gamma=2.0)
        r = focal_loss(np.array([[0.5]]), np.array([[1]]), lp)
        assert r.value == pytest.approx(0.25 * 0.25 * math.log(2), rel=1e-12)
        assert r.value == pytest.approx(0.04332, abs=1e-5)

    def test_combined(self):
        lp = LossParams(alpha=0.7, beta=0.3, gamma=4 / 3, delta=0.5, epsilon=0.0)
        expected = 0.5 * 0.5 + 0.5 * 0.5**0.75
        assert combined_loss(P4, G4, lp).value == pytest.approx(expected, abs=1e-15)
        assert expected == pytest.approx(0.54730, abs=1e-5)


class TestPerfectPrediction:
    @pytest.mark.parametrize("fn", [tversky_loss, focal_tversky_loss, jaccard_loss, dice_loss])
    def test_zero_at_optimum(self, fn):
        g = (np.random.default_rng(3).uniform(size=(6, 6)) < 0.5).astype(np.uint8)
        assert fn(g.astype(float), g, LossParams()).value == 0.0

    def test_verbatim_dice_is_half_at_optimum(self):
        g = np.ones((4, 4), dtype=np.uint8)
        r = dice_loss(g.astype(float), g, LossParams(epsilon=0.0, dice_variant="verbatim"))
        assert r.value == pytest.approx(0.5)

    def test_focal_tversky_gradient_defined_at_optimum(self):
        g = np.eye(4, dtype=np.uint8)
        r = focal_tversky_loss(g.astype(float), g, LossParams(gamma=4 / 3))
        assert np.all(r.grad == 0)

    def test_focal_vanishes_with_clamp(self):
        g = np.eye(4, dtype=np.uint8)
        values = [focal_loss(g.astype(float), g, LossParams(focal_clamp=c)).value for c in (1e-3, 1e-5, 1e-7)]
        assert values[0] > values[1] > values[2] > 0
        assert values[2] < 0.25 * 1e-7


class TestReductions:
    def test_focal_tversky_gamma_one_is_tversky(self):
        rng = np.random.default_rng(0)
        lp = LossParams(gamma=1.0)
        for _ in range(20):
            p, g = random_inputs(rng)
            a, b = focal_tversky_loss(p, g, lp), tversky_loss(p, g, lp)
            assert a.value == pytest.approx(b.value, abs=1e-12)
            np.testing.assert_allclose(a.grad, b.grad, atol=1e-12)

    def test_tversky_half_half_is_dice(self):
        rng = np.random.default_rng(1)
        lp = LossParams(alpha=0.5, beta=0.5, epsilon=0.0)
        for _ in range(20):
            p, g = random_inputs(rng)
            assert tversky_loss(p, g, lp).value == pytest.approx(dice_loss(p, g, lp).value, abs=1e-12)

    def test_focal_gamma_zero_is_half_bce(self):
        rng = np.random.default_rng(2)
        lp = LossParams(focal_alpha=0.5, focal_gamma=0.0)
        for _ in range(10):
            p, g = random_inputs(rng)
            assert focal_loss(p, g, lp).value == pytest.approx(0.5 * scalar_bce(p, g), rel=1e-12)

    def test_dice_jaccard_relation(self):
        rng = np.random.default_rng(4)
        lp = LossParams(epsilon=0.0)
        for _ in range(20):
            p, g = random_inputs(rng)
            d = 1 - dice_loss(p, g, lp).value
            j = 1 - jaccard_loss(p, g, lp).value
            assert d == pytest.approx(2 * j / (1 + j), abs=1e-12)

    @pytest.mark.parametrize("delta,other", [(1.0, dice_loss), (0.0, focal_tversky_loss)])
    def test_combined_endpoints(self, delta, other):
        rng = np.random.default_rng(5)
        lp = LossParams(delta=delta)
        for _ in range(10):
            p, g = random_inputs(rng)
            a, b = combined_loss(p, g, lp), other(p, g, lp)
            assert a.value == pytest.approx(b.value, abs=1e-12)
            np.testing.assert_allclose(a.grad, b.grad, atol=1e-12)

    def test_vectorized_matches_scalar_oracle(self):
        rng = np.random.default_rng(6)
        lp = LossParams()
        for _ in range(5):
            p, g = random_inputs(rng)
            assert dice_loss(p, g, lp).value == pytest.approx(scalar_dice(p, g, lp.epsilon), abs=1e-13)
            ti = scalar_tversky(p, g, lp.alpha, lp.beta, lp.epsilon)
            assert tversky_loss(p, g, lp).value == pytest.approx(1 - ti, abs=1e-13)


ALL = [dice_loss, jaccard_loss, tversky_loss, focal_tversky_loss, focal_loss, combined_loss]


class TestGradients:
    @pytest.mark.parametrize("fn", ALL)
    @pytest.mark.parametrize("variant", ["conventional", "verbatim"])
    def test_matches_finite_differences(self, fn, variant):
        rng = np.random.default_rng(7)
        lp = LossParams(dice_variant=variant)
        for _ in range(3):
            p, g = random_inputs(rng)
            num = finite_difference_gradient(fn, p, g, lp, 1e-4)
            assert max_relative_error(fn(p, g, lp).grad, num) < 1e-4

    def test_fd_of_linear_functional(self):
        p = np.random.default_rng(0).uniform(0.1, 0.9, size=(5, 5))
        num = finite_difference_gradient(lambda x, g, prm: float(np.mean(x)), p, None, None, 1e-3)
        np.testing.assert_allclose(num, 1 / 25, rtol=1e-9)

    def test_fd_rejects_nonpositive_step(self):
        with pytest.raises(ValueError):
            finite_difference_gradient(dice_loss, np.full((2, 2), 0.5), G4, LossParams(), 0.0)

    def test_focal_gradient_zero_in_clamp(self):
        p = np.array([[0.0, 1.0]])
        g = np.array([[1, 0]])
        assert np.all(focal_loss(p, g, LossParams()).grad == 0)


class TestProperties:
    @settings(max_examples=60, deadline=None)
    @given(
        p=arrays(np.float64, (4, 4), elements=st.floats(0, 1)),
        g=arrays(np.uint8, (4, 4), elements=st.integers(0, 1)),
    )
    def test_range_and_finite(self, p, g):
        lp = LossParams()
        for fn in (dice_loss, jaccard_loss, tversky_loss, focal_tversky_loss):
            r = fn(p, g, lp)
            assert -1e-12 <= r.value <= 1 + 1e-12
            assert np.all(np.isfinite(r.grad))

    @settings(max_examples=60, deadline=None)
    @given(
        p=arrays(np.float64, (3, 3), elements=st.floats(0, 0.9)),
        g=arrays(np.uint8, (3, 3), elements=st.integers(0, 1)),
        idx=st.integers(0, 8),
        bump=st.floats(0.001, 0.1),
    )
    def test_tversky_monotone_in_false_positives(self, p, g, idx, bump):
        g = g.copy()
        g.flat[idx] = 0
        lp = LossParams(beta=0.3)
        q = p.copy()
        q.flat[idx] += bump
        assert tversky_loss(q, g, lp).value >= tversky_loss(p, g, lp).value - 1e-15


class TestValidation:
    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            dice_loss(np.zeros((2, 2)), np.zeros((3, 3)), LossParams())

    @pytest.mark.parametrize("kw", [{"alpha": -1}, {"gamma": 0}, {"delta": 1.5}, {"dice_variant": "x"}])
    def test_bad_params(self, kw):
        with pytest.raises(ValueError):
            LossParams(**kw)

    def test_degenerate_zero_eps(self):
        z = np.zeros((2, 2))
        with pytest.raises(ValueError):
            tversky_loss(z, z.astype(np.uint8), LossParams(epsilon=0.0))


def test_batch_loss_is_mean_of_images():
    rng = np.random.default_rng(8)
    ps, gs = zip(*[random_inputs(rng, 4) for _ in range(3)])
    p, g = np.stack(ps), np.stack(gs)
    r = batch_loss(combined_loss, p, g, LossParams())
    singles = [combined_loss(a, b, LossParams()) for a, b in zip(ps, gs)]
    assert r.value == pytest.approx(np.mean([s.value for s in singles]), abs=1e-15)
    np.testing.assert_allclose(r.grad[1], singles[1].grad / 3)
