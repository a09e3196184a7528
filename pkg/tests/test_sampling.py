import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from scipy import stats

from bprlab import _kernel
from bprlab.data import InteractionLog
from bprlab.errors import NoNegativeAvailable
from bprlab.model import ModelParams
from bprlab.sampling import (
    AdaptiveSamplerState,
    _rank_from_uniform,
    rank_probabilities,
    refresh_adaptive_state,
    sample_negative_adaptive,
    sample_negative_uniform,
    sample_positive,
    sample_rank,
)


def test_sample_positive_is_uniform_over_events(tiny_log, rng):
    h = tiny_log.history
    draws = [sample_positive(h, rng) for _ in range(20000)]
    assert set(draws) <= tiny_log.event_set()
    counts = np.array([draws.count(e) for e in sorted(tiny_log.event_set())])
    assert stats.chisquare(counts).pvalue > 1e-3


def test_uniform_negative_excludes_history(tiny_log, rng):
    h = tiny_log.history
    for u in range(tiny_log.user_count):
        seen = set(h.items_of(u).tolist())
        draws = {sample_negative_uniform(u, h, rng) for _ in range(300)}
        assert not draws & seen
        assert draws == set(range(8)) - seen


def test_uniform_negative_saturated_user():
    log = InteractionLog.from_events([(0, i) for i in range(4)] + [(1, 0)], 2, 4)
    with pytest.raises(NoNegativeAvailable):
        sample_negative_uniform(0, log.history, np.random.default_rng(0))


def test_rank_inverse_cdf_boundaries():
    n, T = 50, 7.0
    p = rank_probabilities(n, T)
    cdf = np.cumsum(p)
    # just below/above each CDF step lands on either side of the rank boundary
    for k in range(n - 1):
        assert _rank_from_uniform(n, T, cdf[k] - 1e-9) == k
        assert _rank_from_uniform(n, T, cdf[k] + 1e-9) == k + 1
    assert _rank_from_uniform(n, T, 0.0) == 0
    assert _rank_from_uniform(n, T, 1.0 - 1e-16) == n - 1


def test_rank_distribution_goodness_of_fit(rng):
    n, T = 30, 5.0
    draws = np.array([sample_rank(n, T, rng) for _ in range(60000)])
    counts = np.bincount(draws, minlength=n)
    expected = rank_probabilities(n, T) * len(draws)
    assert expected.min() >= 5
    assert stats.chisquare(counts, expected).pvalue > 1e-3


def test_rank_zero_temperature_is_top():
    assert _rank_from_uniform(100, 0.0, 0.99) == 0
    assert _rank_from_uniform(100, 1e-300, 0.99) == 0


def _factor_model():
    # 3 factors, 6 items: each factor has a different top item
    Q = np.array([
        [3.0, 0.0, 0.1],
        [0.0, 3.0, 0.2],
        [0.0, 0.1, 3.0],
        [1.0, 1.0, 1.0],
        [-1.0, -2.0, 0.0],
        [0.5, -1.0, -3.0],
    ])
    P = np.array([[1.0, -2.0, 0.5], [0.2, 0.2, 0.2]])
    return ModelParams(P, Q)


def test_refresh_orderings_and_std():
    params = _factor_model()
    st = AdaptiveSamplerState.empty(6, 3)
    refresh_adaptive_state(params, st)
    for f in range(3):
        assert_array_equal(st.orderings[f], np.argsort(-params.Q[:, f], kind="stable"))
    assert_allclose(st.factor_std, params.Q.std(axis=0))
    assert st.refreshed == 1
    assert AdaptiveSamplerState.empty(1000, 4).rank_temperature == 10.0


def test_adaptive_limit_returns_top_or_bottom_item(rng):
    params = _factor_model()
    log = InteractionLog.from_events([(1, 3)], 2, 6)
    st = AdaptiveSamplerState.empty(6, 3, rank_temperature=1e-12)
    refresh_adaptive_state(params, st)
    draws = [sample_negative_adaptive(0, params, st, log.history, rng) for _ in range(3000)]
    # user 0: p > 0 on factors 0 and 2 picks their top items (0 and 2);
    # p < 0 on factor 1 picks the bottom of factor 1's ordering (item 4)
    assert set(draws) == {0, 2, 4}
    w = np.abs(params.P[0]) * st.factor_std
    freq = np.array([draws.count(0), draws.count(4), draws.count(2)]) / len(draws)
    assert_allclose(freq, w / w.sum(), atol=0.03)


def test_adaptive_skips_positives_and_falls_back(rng):
    params = _factor_model()
    # user 0 owns every factor-extreme item, so the cold sampler retries then falls back
    log = InteractionLog.from_events([(0, 0), (0, 2), (0, 4)], 2, 6)
    st = AdaptiveSamplerState.empty(6, 3, rank_temperature=1e-12, retry_cap=5)
    refresh_adaptive_state(params, st)
    draws = {sample_negative_adaptive(0, params, st, log.history, rng) for _ in range(500)}
    assert draws == {1, 3, 5}


def test_adaptive_zero_user_vector_is_uniform(rng):
    params = _factor_model()
    params.P[1] = 0.0
    log = InteractionLog.from_events([(1, 0)], 2, 6)
    st = AdaptiveSamplerState.empty(6, 3)
    refresh_adaptive_state(params, st)
    draws = [sample_negative_adaptive(1, params, st, log.history, rng) for _ in range(5000)]
    assert set(draws) == {1, 2, 3, 4, 5}


def test_kernel_adaptive_matches_reference_distribution(small_log):
    h = small_log.history
    rng = np.random.default_rng(0)
    params = ModelParams(rng.normal(size=(small_log.user_count, 8)), rng.normal(size=(small_log.item_count, 8)))
    st = AdaptiveSamplerState.empty(small_log.item_count, 8, rank_temperature=4.0)
    refresh_adaptive_state(params, st)
    users = np.full(1, 5, dtype=np.int64)
    _kernel.seed_rng(1)
    k = _kernel.draw_adaptive(40000, users, params.P, h.indptr, h.indices, st.orderings, st.factor_std, 4.0, 50)
    ref = np.array([sample_negative_adaptive(5, params, st, h, rng) for _ in range(40000)])
    assert not set(k.tolist()) & set(h.items_of(5).tolist())
    ck = np.bincount(k, minlength=small_log.item_count)
    cr = np.bincount(ref, minlength=small_log.item_count)
    keep = (ck + cr) >= 10
    table = np.vstack([np.append(ck[keep], ck[~keep].sum()), np.append(cr[keep], cr[~keep].sum())])
    table = table[:, table.sum(axis=0) > 0]
    assert stats.chi2_contingency(table).pvalue > 1e-3


def test_kernel_uniform_excludes_history(small_log):
    h = small_log.history
    users = np.arange(small_log.user_count, dtype=np.int64)
    _kernel.seed_rng(3)
    draws = _kernel.draw_uniform(20 * len(users), users, h.indptr, h.indices, small_log.item_count)
    for n, j in enumerate(draws.tolist()):
        assert not h.contains(int(users[n % len(users)]), j)
