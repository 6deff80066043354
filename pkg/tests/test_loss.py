import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import norm

from robpspline import InvalidParameterError, LossSpec, make_loss, psi, rho, weight
from robpspline.loss import (
    EPS_WEIGHT,
    absolute,
    check,
    expectile,
    hampel,
    huber,
    least_squares,
    logcosh,
    lq,
    psi_bound,
    tukey,
)

ALL = [
    least_squares(), huber(), huber(0.5), tukey(), tukey(2.0, normalized=True), hampel(),
    hampel(1.0, 1.0, 3.0), check(0.3), check(0.5), expectile(0.25), lq(1.5), lq(1.1),
    absolute(), logcosh(),
]
SYMMETRIC = [loss for loss in ALL if loss.symmetric]


def kinks(loss):
    if loss.kind == "huber":
        return [loss.k]
    if loss.kind == "tukey":
        return [loss.c]
    if loss.kind == "hampel":
        return [loss.a, loss.b, loss.c]
    return [0.0]


class TestExamples:
    def test_huber_rho(self):
        assert rho(huber(1.345), 1.0) == 0.5
        assert rho(huber(1.345), 10.0) == pytest.approx(12.5454875, abs=1e-12)

    def test_scale_rho_saturates(self):
        assert rho(tukey(0.704, normalized=True), 2.0) == 1.0

    def test_huber_psi(self):
        assert psi(huber(2.0), 1.0) == 1.0

    def test_check_psi(self):
        loss = check(0.3)
        assert psi(loss, -1.0) == pytest.approx(-0.7)
        assert psi(loss, 2.0) == pytest.approx(0.3)

    def test_expectile_psi(self):
        assert psi(expectile(0.25), -2.0) == -1.5

    def test_weights(self):
        assert np.all(weight(least_squares(), [-3.0, 0.0, 1e-12, 7.0]) == 2.0)
        np.testing.assert_array_equal(weight(tukey(4.685), [4.685, -5.0, 100.0]), 0.0)
        assert weight(huber(1.345), 2 * 1.345) == pytest.approx(0.5, abs=1e-15)

    def test_check_half_is_half_absolute(self):
        x = np.linspace(-5, 5, 1001)
        np.testing.assert_allclose(rho(check(0.5), x), 0.5 * np.abs(x), atol=1e-15)

    def test_tukey_forms(self):
        x = np.linspace(-6, 6, 301)
        regression, bounded = tukey(3.0), tukey(3.0, normalized=True)
        np.testing.assert_allclose(rho(regression, x), 1.5 * rho(bounded, x), atol=1e-14)
        assert rho(regression, 10.0) == pytest.approx(1.5)
        assert weight(regression, 0.0) == 1.0
        assert weight(bounded, 0.0) == pytest.approx(6.0 / 9.0)

    def test_hampel_continuous(self):
        loss = hampel(2.0, 4.0, 8.0)
        for x0 in (2.0, 4.0, 8.0):
            assert rho(loss, x0 - 1e-10) == pytest.approx(rho(loss, x0 + 1e-10), abs=1e-8)
            assert psi(loss, x0 - 1e-10) == pytest.approx(psi(loss, x0 + 1e-10), abs=1e-8)
        assert rho(loss, 100.0) == pytest.approx(0.5 * 2 * (4 + 8 - 2))

    def test_logcosh_large_argument(self):
        assert rho(logcosh(), 1000.0) == pytest.approx(1000.0 - np.log(2.0))
        assert np.isfinite(rho(logcosh(), 1e300))


class TestConstruction:
    @pytest.mark.parametrize("kind, params", [
        ("huber", {"k": -1.0}), ("huber", {"k": np.inf}), ("tukey", {"c": 0.0}),
        ("hampel", {"a": 3.0, "b": 2.0, "c": 5.0}), ("hampel", {"a": 1.0, "b": 2.0, "c": 2.0}),
        ("check", {"alpha": 1.0}), ("expectile", {"alpha": 0.0}), ("lq", {"exponent": 2.0}),
        ("lq", {"exponent": 1.0}), ("huber", {"alpha": 0.3}), ("nonsense", {}),
    ])
    def test_invalid(self, kind, params):
        with pytest.raises(InvalidParameterError):
            make_loss(kind, **params)

    def test_aliases_and_defaults(self):
        assert make_loss("least-squares") == least_squares()
        assert make_loss("log-cosh") == logcosh()
        assert make_loss("huber").k == 1.345
        assert make_loss("tukey").c == 4.685
        assert make_loss("tukey", c=None) == tukey()

    def test_flags(self):
        assert not tukey().convex and not hampel().convex
        assert all(loss.convex for loss in ALL if loss.kind not in ("tukey", "hampel"))
        assert not check(0.3).symmetric and not expectile(0.3).symmetric

    def test_names(self):
        assert huber(1.5).name == "huber(k=1.5)"
        assert hampel().name == "hampel(a=2,b=4,c=8)"
        assert logcosh().name == "logcosh"
        assert LossSpec("ls").to_dict() == {"kind": "ls"}


@pytest.mark.parametrize("loss", ALL, ids=lambda loss: loss.name)
class TestCatalogueProperties:
    def test_rho_nonnegative_zero_at_origin(self, loss):
        assert rho(loss, 0.0) == 0.0
        x = np.random.default_rng(0).standard_normal(1000) * 5
        assert np.all(rho(loss, x) >= 0)

    def test_psi_is_derivative(self, loss):
        rng = np.random.default_rng(1)
        x = rng.standard_normal(10_000) * 3
        h = 1e-6
        far = np.min(np.abs(np.abs(x)[:, None] - np.array(kinks(loss))[None, :]), axis=1) > 1e-4
        x = x[far & (np.abs(x) > 1e-4)]
        numeric = (rho(loss, x + h) - rho(loss, x - h)) / (2 * h)
        exact = psi(loss, x)
        err = np.abs(numeric - exact) / np.maximum(np.abs(exact), 1e-3)
        assert np.max(err) < 1e-5

    def test_weight_times_residual(self, loss):
        r = np.random.default_rng(2).standard_normal(1000) * 4
        r = r[np.abs(r) > EPS_WEIGHT]
        np.testing.assert_allclose(weight(loss, r) * r, psi(loss, r), rtol=1e-15, atol=0)

    def test_weight_finite_and_nonnegative(self, loss):
        r = np.array([0.0, EPS_WEIGHT, -EPS_WEIGHT, 1e-300, -1e-300, 1e-9, 1e3, -1e3])
        w = weight(loss, r)
        assert np.all(np.isfinite(w)) and np.all(w >= 0)

    def test_psi_bound(self, loss):
        bound = psi_bound(loss)
        x = np.linspace(-50, 50, 200_001)
        sup = np.max(np.abs(psi(loss, x)))
        if np.isinf(bound):
            assert loss.kind in ("ls", "expectile", "lq")
        else:
            assert sup <= bound + 1e-12
            assert sup == pytest.approx(bound, rel=1e-6)


@pytest.mark.parametrize("loss", SYMMETRIC, ids=lambda loss: loss.name)
def test_psi_odd(loss):
    x = np.random.default_rng(3).standard_normal(500) * 6
    np.testing.assert_array_equal(psi(loss, -x), -psi(loss, x))


@settings(max_examples=100, deadline=None)
@given(k=st.floats(0.1, 5.0), x=st.floats(-1e6, 1e6))
def test_huber_psi_clip(k, x):
    assert psi(huber(k), x) == min(max(x, -k), k)
    assert 0 < weight(huber(k), x) <= 1.0


@pytest.mark.parametrize("loss, slope", [
    (huber(1.345), 2 * norm.cdf(1.345) - 1),
    (huber(0.7), 2 * norm.cdf(0.7) - 1),
    (expectile(0.25), 0.5),
    (expectile(0.9), 0.5),
    (hampel(1.0, 2.0, 3.0), (2 * norm.cdf(1.0) - 1) - 2 * (norm.cdf(3.0) - norm.cdf(2.0))),
    (hampel(), (2 * norm.cdf(2.0) - 1) - 0.5 * (norm.cdf(8.0) - norm.cdf(4.0))),
], ids=lambda v: v.name if isinstance(v, LossSpec) else "")
def test_fisher_slope(loss, slope):
    eps = np.random.default_rng(4).standard_normal(1_000_000)
    t = 0.01
    per_draw = (psi(loss, eps + t) - psi(loss, eps - t)) / (2 * t)
    se = per_draw.std(ddof=1) / np.sqrt(eps.size)
    assert abs(per_draw.mean() - slope) < 3 * se
