import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from l0lab.classify import (LikelihoodScores, classify_ml, classify_truncated, loglik_transform,
                            score_values, tsum)
from l0lab.errors import BudgetTooLarge, NonFinite
from l0lab.experiment import score_sums
from l0lab.model import ProblemInstance

finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


@st.composite
def vector_and_k(draw, min_d=1, max_d=30):
    d = draw(st.integers(min_d, max_d))
    u = draw(hnp.arrays(np.float64, d, elements=finite))
    k = draw(st.integers(0, (d - 1) // 2))
    return u, k


class TestTransform:
    def test_gaussian_closed_form(self, gauss):
        inst = ProblemInstance(4, 1.0, gauss)   # mu = 0.5
        out = loglik_transform(inst, [1.0, 0.0, -2.0, 3.0])
        assert isinstance(out, LikelihoodScores) and len(out) == 4
        np.testing.assert_allclose(out.scores, 2 * 0.5 * np.array([1.0, 0.0, -2.0, 3.0]),
                                   atol=1e-12)

    def test_symmetric_zero(self, quart):
        inst = ProblemInstance(9, 2.0, quart)
        assert np.all(loglik_transform(inst, np.zeros(9)).scores == 0.0)

    def test_quartic_substitution(self, quart):
        inst = ProblemInstance(1, 1.0, quart)   # mu = 1
        assert loglik_transform(inst, [1.0]).scores[0] == pytest.approx(16.0)

    def test_matches_log_density_difference(self, skewed):
        inst = ProblemInstance(16, 1.5, skewed)
        x = np.linspace(-2, 2, 16)
        mu = inst.mu_d
        want = skewed.log_density(x - mu) - skewed.log_density(x + mu)
        np.testing.assert_allclose(loglik_transform(inst, x).scores, want, atol=1e-10)

    def test_length_checked(self, gauss):
        with pytest.raises(ValueError):
            loglik_transform(ProblemInstance(4, 1.0, gauss), [1.0, 2.0])

    def test_nan_rejected(self, gauss):
        with pytest.raises(NonFinite):
            loglik_transform(ProblemInstance(2, 1.0, gauss), [1.0, np.nan])

    @settings(max_examples=200, deadline=None)
    @given(hnp.arrays(np.float64, 8, elements=st.floats(-50, 50)), st.floats(0.01, 3))
    def test_odd_in_mu_for_symmetric_noise(self, x, mu):
        from l0lab.noise import quartic
        coeffs = quartic().coeffs
        np.testing.assert_allclose(score_values(coeffs, mu, x), -score_values(coeffs, -mu, x),
                                   rtol=0, atol=1e-9 * (1 + np.max(np.abs(x)) ** 3))


class TestTsum:
    @pytest.mark.parametrize("u, k, want", [([3, 1, 2, 5, 4], 1, 9), ([1, 2, 3], 0, 6),
                                            ([5, 4, 3, 2, 1], 2, 3)])
    def test_examples(self, u, k, want):
        assert tsum(u, k) == want

    def test_budget(self):
        with pytest.raises(BudgetTooLarge):
            tsum([1, 2, 3, 4], 2)
        with pytest.raises(ValueError):
            tsum([1, 2, 3], -1)

    def test_nan_rejected(self):
        with pytest.raises(NonFinite):
            tsum([1.0, np.nan, 2.0], 1)

    @settings(max_examples=300, deadline=None)
    @given(vector_and_k(), st.randoms(use_true_random=False))
    def test_permutation_invariant(self, uk, rnd):
        u, k = uk
        perm = list(range(len(u)))
        rnd.shuffle(perm)
        assert tsum(u, k) == tsum(u[perm], k)

    @settings(max_examples=300, deadline=None)
    @given(vector_and_k(), st.data())
    def test_monotone(self, uk, data):
        u, k = uk
        i = data.draw(st.integers(0, len(u) - 1))
        bump = data.draw(st.floats(0, 1e6))
        v = u.copy()
        v[i] += bump
        assert tsum(v, k) >= tsum(u, k)

    @settings(max_examples=300, deadline=None)
    @given(vector_and_k())
    def test_between_order_statistics(self, uk):
        u, k = uk
        s = np.sort(u)
        d = len(u)
        t = tsum(u, k)
        assert (d - 2 * k) * s[k] - 1e-6 * (1 + abs(t)) <= t
        assert t <= (d - 2 * k) * s[d - k - 1] + 1e-6 * (1 + abs(t))


class TestTruncationBound:
    """|TSum_k(x') - sum(x)| <= 8 k ||x||_inf whenever x' differs from x in at most k places."""

    def test_random_instances(self):
        rng = np.random.default_rng(2024)
        for _ in range(10_000):
            d = int(rng.integers(3, 40))
            k = int(rng.integers(0, (d - 1) // 2 + 1))
            x = rng.normal(size=d) * rng.choice([0.1, 1.0, 10.0])
            xp = x.copy()
            m = int(rng.integers(0, k + 1))
            idx = rng.choice(d, size=m, replace=False)
            xp[idx] = rng.normal(size=m) * 10.0 ** rng.integers(-2, 8, size=m)
            bound = 8 * k * np.max(np.abs(x))
            assert abs(tsum(xp, k) - np.sum(x)) <= bound + 1e-9 * (1 + bound)


class TestClassifiers:
    def test_ml_examples(self, gauss):
        inst = ProblemInstance(4, 1.0, gauss)   # mu = 0.5
        two = ProblemInstance(2, 1.0 * np.sqrt(2) * 0.5, gauss)
        assert two.mu_d == pytest.approx(0.5)
        assert classify_ml(two, [1.0, 1.0]) == 1
        assert classify_ml(two, [-1.0, -1.0]) == -1
        assert classify_ml(inst, np.zeros(4)) == -1

    def test_truncated_examples(self, gauss):
        inst = ProblemInstance(5, 0.5 * np.sqrt(5), gauss)
        x = [10, 1, 1, 1, -10]
        assert classify_truncated(inst, x, 1) == 1
        assert classify_truncated(inst, x, 2) == 1
        assert tsum(loglik_transform(inst, x), 1) == pytest.approx(3.0)
        assert tsum(loglik_transform(inst, x), 2) == pytest.approx(1.0)

    def test_truncated_tie(self, gauss):
        assert classify_truncated(ProblemInstance(5, 1.0, gauss), [0, 0, 0, 9, -9], 1) == -1

    def test_truncated_budget(self, gauss):
        with pytest.raises(BudgetTooLarge):
            classify_truncated(ProblemInstance(4, 1.0, gauss), np.ones(4), 2)

    def test_k0_agrees_with_ml(self, skewed):
        rng = np.random.default_rng(5)
        inst = ProblemInstance(7, 1.0, skewed)
        for _ in range(10_000):
            x = rng.normal(size=7) * 2
            assert classify_truncated(inst, x, 0) == classify_ml(inst, x)


class TestScoreSumLimit:
    @pytest.mark.parametrize("name", ["gauss", "quart"])
    def test_mean_and_variance(self, name, request):
        noise = request.getfixturevalue(name)
        sums = score_sums(noise, 1.0, 10_000, 10_000, seed=8, label=1)
        info = noise.fisher_info
        assert abs(sums.mean() / (2 * info) - 1) < 0.05
        assert abs(sums.var() / (4 * info) - 1) < 0.10
