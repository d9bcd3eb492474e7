import math

import numpy as np
import pytest
from scipy.stats import spearmanr
from sklearn.feature_selection import chi2 as sk_chi2

from scenemotion.selection import (FilterThresholds, SelectionMask, average_ranks, chi2_filter, chi2_scores,
                                   kde_estimate, kde_overlap, kde_overlap_filter, population_variance,
                                   run_filter_bank, silverman_bandwidth, spearman, spearman_filter, top_k,
                                   variance_filter)


# --- brute-force oracles ------------------------------------------------------------

def variance_oracle(col):
    mu = sum(col) / len(col)
    return sum((v - mu) ** 2 for v in col) / len(col)


def chi2_oracle(col, y):
    total = sum(col)
    score = 0.0
    for c in range(3):
        obs = sum(v for v, t in zip(col, y) if t == c)
        exp = sum(1 for t in y if t == c) / len(y) * total
        if exp > 0:
            score += (obs - exp) ** 2 / exp
    return score


def topk_oracle(scores, k):
    order = sorted(range(len(scores)), key=lambda j: (-scores[j], j))
    return set(order[:k])


def spearman_oracle(x, y):
    def ranks(v):
        out = [0.0] * len(v)
        for i, a in enumerate(v):
            less = sum(1 for b in v if b < a)
            equal = sum(1 for b in v if b == a)
            out[i] = less + (equal + 1) / 2.0
        return out
    rx, ry = ranks(list(x)), ranks(list(y))
    mx, my = sum(rx) / len(rx), sum(ry) / len(ry)
    num = sum((a - mx) * (b - my) for a, b in zip(rx, ry))
    den = math.sqrt(sum((a - mx) ** 2 for a in rx) * sum((b - my) ** 2 for b in ry))
    return num / den if den > 0 else 0.0


def bank_oracle(Xtr, ytr, Xte, th):
    alive = [j for j in range(Xtr.shape[1]) if variance_oracle(list(Xtr[:, j])) >= th.variance * (1 - 1e-12)]
    scores = [chi2_oracle(list(Xtr[:, j]), list(ytr)) for j in alive]
    keep = topk_oracle(scores, th.chi2_k)
    alive = [j for i, j in enumerate(alive) if i in keep]
    alive = [j for j in alive if kde_overlap(Xtr[:, j], Xte[:, j]) >= th.kde_overlap * (1 - 1e-12)]
    alive = [j for j in alive if abs(spearman_oracle(Xtr[:, j], ytr)) >= th.spearman * (1 - 1e-12)]
    return alive


# --- tests --------------------------------------------------------------------------

class TestVariance:
    def test_constant_dropped(self):
        assert not variance_filter(np.ones((10, 1)))[0]

    def test_alternating_zero_one(self):
        col = np.tile([0.0, 1.0], 10)[:, None]
        assert population_variance(col)[0] == 0.25
        assert variance_filter(col)[0]

    def test_zero_threshold_keeps_all(self, rng):
        X = rng.uniform(0, 1, (10, 5))
        X[:, 2] = 0.3
        assert variance_filter(X, 0.0).all()

    def test_matches_oracle(self, rng):
        for _ in range(20):
            X = rng.uniform(0, 1, (50, 20)) * rng.uniform(0, 0.8, 20)
            want = [variance_oracle(list(X[:, j])) >= 0.02 for j in range(20)]
            np.testing.assert_array_equal(variance_filter(X, 0.02), want)

    def test_boundary_kept(self):
        # half 0, half a with a^2 / 4 = 0.02: population variance equals the threshold
        a = math.sqrt(0.08)
        col = np.array([0.0] * 25 + [a] * 25)[:, None]
        assert population_variance(col)[0] == pytest.approx(0.02, rel=1e-14)
        assert variance_filter(col, 0.02)[0]
        v = population_variance(col)[0]
        assert variance_filter(col, v)[0]
        assert not variance_filter(col, v * (1 + 1e-9))[0]


class TestChi2:
    def test_identical_across_classes_is_zero(self):
        X = np.full((30, 1), 0.7)
        y = np.repeat([0, 1, 2], 10)
        assert chi2_scores(X, y)[0] == pytest.approx(0.0, abs=1e-12)

    def test_hand_value(self):
        y = np.repeat([0, 1, 2], 10)
        X = (y == 2).astype(float)[:, None]
        assert chi2_scores(X, y)[0] == pytest.approx(20.0)

    def test_matches_sklearn(self, rng):
        X = rng.uniform(0, 1, (60, 15))
        y = rng.integers(0, 3, 60)
        np.testing.assert_allclose(chi2_scores(X, y), sk_chi2(X, y)[0], rtol=1e-10)

    def test_matches_oracle_mask(self, rng):
        for _ in range(20):
            X = rng.uniform(0, 1, (50, 20))
            y = rng.integers(0, 3, 50)
            k = int(rng.integers(1, 20))
            scores = [chi2_oracle(list(X[:, j]), list(y)) for j in range(20)]
            np.testing.assert_allclose(chi2_scores(X, y), scores, rtol=1e-10)
            assert set(np.flatnonzero(chi2_filter(X, y, k))) == topk_oracle(scores, k)

    def test_top_60_of_195(self, rng):
        X = rng.uniform(0, 1, (90, 195))
        y = np.repeat([0, 1, 2], 30)
        keep = chi2_filter(X, y, 60)
        assert keep.sum() == 60
        scores = chi2_scores(X, y)
        assert scores[keep].min() >= scores[~keep].max()

    def test_ties_favour_lower_index(self):
        np.testing.assert_array_equal(top_k([1.0, 2.0, 2.0, 2.0], 2), [False, True, True, False])

    def test_k_at_least_width_is_identity(self, rng):
        assert chi2_filter(rng.uniform(0, 1, (9, 4)), np.arange(9) % 3, 4).all()

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            chi2_scores(-np.ones((3, 1)), np.arange(3))


class TestKde:
    def test_single_sample_peak(self):
        assert kde_estimate([0.3], 0.5, 0.3) == pytest.approx(1 / (0.5 * math.sqrt(2 * math.pi)))

    def test_integrates_to_one(self, rng):
        s = rng.standard_normal(40)
        grid = np.linspace(-15, 15, 20001)
        assert np.trapezoid(kde_estimate(s, 0.4, grid), grid) == pytest.approx(1.0, abs=1e-3)

    def test_symmetric(self):
        s = np.array([-2.0, -1.0, 1.0, 2.0])
        x = np.linspace(0, 4, 9)
        np.testing.assert_allclose(kde_estimate(s, 0.7, x), kde_estimate(s, 0.7, -x), rtol=1e-14)

    def test_silverman(self, rng):
        s = rng.standard_normal(100)
        sd = s.std(ddof=1)
        iqr = (np.percentile(s, 75) - np.percentile(s, 25)) / 1.34
        assert silverman_bandwidth(s) == pytest.approx(0.9 * min(sd, iqr) * 100 ** -0.2)

    def test_identical_columns_overlap_one(self, rng):
        s = rng.uniform(0, 1, 60)
        assert kde_overlap(s, s) == pytest.approx(1.0, abs=1e-3)
        assert kde_overlap_filter(s[:, None], s[:, None])[0]

    def test_disjoint_supports_overlap_zero(self, rng):
        a = np.concatenate([rng.uniform(0, 0.01, 20), rng.uniform(0.09, 0.1, 20)])
        b = rng.uniform(0.9, 1.0, 40)
        assert kde_overlap(a, b) < 1e-6
        assert not kde_overlap_filter(a[:, None], b[:, None])[0]

    def test_bounds(self, rng):
        for _ in range(50):
            a = rng.normal(rng.uniform(-1, 1), rng.uniform(0.01, 1), 30)
            b = rng.normal(rng.uniform(-1, 1), rng.uniform(0.01, 1), 10)
            assert 0.0 <= kde_overlap(a, b) <= 1.0

    def test_constant_columns(self):
        assert kde_overlap(np.ones(5), np.ones(3)) == 1.0
        assert kde_overlap(np.ones(5), np.zeros(3)) == 0.0


class TestSpearman:
    def test_monotone_is_one(self):
        y = np.repeat([0, 1, 2], 5)
        assert spearman(y * 2.0 + 1.0, y) == pytest.approx(1.0)
        assert spearman(np.arange(9.0), np.arange(9.0) ** 3) == pytest.approx(1.0)

    def test_average_ranks(self):
        np.testing.assert_array_equal(average_ranks([10, 20, 20, 5]), [2.0, 3.5, 3.5, 1.0])

    def test_matches_scipy(self, rng):
        for _ in range(30):
            x = rng.integers(0, 6, 40).astype(float)
            y = rng.integers(0, 3, 40)
            assert spearman(x, y) == pytest.approx(spearmanr(x, y).statistic, abs=1e-12)

    def test_noise_dropped(self):
        rng = np.random.default_rng(7)
        x = rng.standard_normal(300)
        y = rng.integers(0, 3, 300)
        r = spearman(x, y)
        assert r == pytest.approx(spearman_oracle(x, y), abs=1e-12)
        assert abs(r) < 0.08
        assert not spearman_filter(x[:, None], y)[0]

    def test_sign_symmetry(self, rng):
        X = rng.uniform(0, 1, (40, 6))
        y = rng.integers(0, 3, 40)
        np.testing.assert_array_equal(spearman_filter(X, y), spearman_filter(-X, y))

    def test_boundary_kept(self):
        # permutation of 1..25 with sum d^2 = 2392 gives r_s = 1 - 6*2392/(25*624) = 0.08 exactly
        perm = _perm_with_sq_diff(25, 2392)
        x = np.array(perm, dtype=float)[:, None]
        y = np.arange(1, 26, dtype=float)
        assert spearman(x[:, 0], y) == pytest.approx(0.08, rel=1e-13)
        assert spearman_filter(x, y, 0.08)[0]
        assert not spearman_filter(x, y, 0.08 * (1 + 1e-9))[0]


def _perm_with_sq_diff(n, target, seed=0):
    """Local search for a permutation p of 1..n with sum (p_i - i)^2 == target."""
    rng = np.random.default_rng(seed)
    p = list(range(1, n + 1))
    cost = lambda q: sum((a - b) ** 2 for a, b in zip(q, range(1, n + 1)))
    cur = cost(p)
    while cur != target:
        i, j = rng.integers(0, n, 2)
        q = p.copy()
        q[i], q[j] = q[j], q[i]
        c = cost(q)
        if abs(c - target) <= abs(cur - target):
            p, cur = q, c
    return p


class TestFilterBank:
    def test_matches_brute_force(self, rng):
        th = FilterThresholds(variance=0.02, chi2_k=12, kde_overlap=0.5, spearman=0.08)
        for _ in range(10):
            y = rng.integers(0, 3, 50)
            Xtr = np.clip(rng.uniform(0, 1, (50, 20)) * rng.uniform(0.1, 1, 20) + 0.3 * y[:, None]
                          * (rng.uniform(0, 1, 20) > 0.5), 0, 1)
            Xte = np.clip(rng.uniform(0, 1, (10, 20)), 0, 1)
            mask = run_filter_bank(Xtr, y, Xte, th)
            assert mask.indices.tolist() == bank_oracle(Xtr, y, Xte, th)

    def test_stage_counts_monotone(self, rng):
        y = np.repeat([0, 1, 2], 30)
        X = np.clip(rng.uniform(0, 1, (90, 195)) * 0.5 + 0.25 * (y[:, None] / 2.0), 0, 1)
        Xte = np.clip(rng.uniform(0, 1, (14, 195)) * 0.5 + 0.25, 0, 1)
        mask = run_filter_bank(X, y, Xte)
        c = mask.stage_counts
        assert c == sorted(c, reverse=True)
        assert c[1] <= 60
        assert mask.width >= 1

    def test_permuting_features_permutes_mask(self, rng):
        y = rng.integers(0, 3, 50)
        X = np.clip(rng.uniform(0, 1, (50, 20)) + 0.2 * y[:, None], 0, 1)
        Xte = rng.uniform(0, 1, (10, 20))
        perm = rng.permutation(20)
        th = FilterThresholds(chi2_k=30, kde_overlap=0.3)
        a = run_filter_bank(X, y, Xte, th)
        b = run_filter_bank(X[:, perm], y, Xte[:, perm], th)
        np.testing.assert_array_equal(a.keep[perm], b.keep)

    def test_zero_survivors_raises(self):
        with pytest.raises(ValueError):
            run_filter_bank(np.ones((9, 3)), np.arange(9) % 3, np.ones((3, 3)))

    def test_mask_roundtrip_and_report(self, rng):
        y = rng.integers(0, 3, 40)
        X = np.clip(rng.uniform(0, 1, (40, 8)) + 0.3 * y[:, None], 0, 1)
        m = run_filter_bank(X, y, X[:10], FilterThresholds(chi2_k=5, kde_overlap=0.1))
        back = SelectionMask.from_dict(m.to_dict())
        np.testing.assert_array_equal(back.apply(X), m.apply(X))
        assert back.dropped_by == m.dropped_by
        assert len(m.report().splitlines()) == 9

    def test_apply_width_mismatch(self):
        with pytest.raises(ValueError):
            SelectionMask(np.ones(3, dtype=bool)).apply(np.zeros((2, 4)))
