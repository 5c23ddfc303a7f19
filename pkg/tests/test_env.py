import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from toprank_lab.env import (
    ClickModel,
    ItemCatalog,
    Permutation,
    check_assumptions,
    click_prob,
    optimal_value,
    sample_clicks,
)
from toprank_lab.errors import EnumerationTooLarge


def test_cascade_second_slot():
    m = ClickModel.cascade((0.5, 0.5), K=2)
    assert click_prob(m, Permutation([0, 1]), 1) == pytest.approx(0.25)


def test_beyond_display_is_zero():
    m = ClickModel.position_based((0.9, 0.6, 0.3), (1.0, 0.5))
    for order in itertools.permutations(range(3)):
        assert click_prob(m, Permutation(order), 2) == 0.0
    c = ClickModel.cascade((0.9, 0.6, 0.3), K=1)
    assert click_prob(c, Permutation([2, 1, 0]), 1) == 0.0


def test_position_based_first_slot():
    m = ClickModel.position_based((0.8, 0.4), (1.0, 0.5))
    assert click_prob(m, Permutation([0, 1]), 0) == pytest.approx(0.8)


def test_zero_attractiveness_never_clicks():
    m = ClickModel.position_based((0.0, 0.0, 0.0), (1.0, 1.0))
    rng = np.random.default_rng(1)
    for _ in range(100):
        assert not sample_clicks(m, Permutation([2, 0, 1]), rng).any()


def test_cascade_stops_at_certain_click():
    m = ClickModel.cascade((1.0, 0.9, 0.9), K=3)
    rng = np.random.default_rng(2)
    for _ in range(200):
        c = sample_clicks(m, Permutation([0, 1, 2]), rng)
        assert c.tolist() == [1, 0, 0]


def test_undisplayed_items_never_clicked():
    m = ClickModel.cascade((0.9, 0.9, 0.9, 0.9), K=2)
    rng = np.random.default_rng(3)
    for _ in range(200):
        c = sample_clicks(m, Permutation([3, 1, 0, 2]), rng)
        assert c[0] == 0 and c[2] == 0


@pytest.mark.parametrize("model", [
    ClickModel.position_based((0.9, 0.6, 0.4, 0.2), (1.0, 0.7, 0.3)),
    ClickModel.cascade((0.9, 0.6, 0.4, 0.2), K=3),
])
def test_empirical_click_rates(model):
    rng = np.random.default_rng(4)
    a = Permutation([2, 0, 3, 1])
    n = 100_000
    draws = rng.random((n, model.L))
    orders = np.broadcast_to(a.order, (n, model.L))
    clicks = model.clicks_from_uniforms(orders, draws)
    counts = clicks[:, a.order].mean(axis=0)
    for k in range(model.L):
        p = click_prob(model, a, k)
        se = max(np.sqrt(p * (1 - p) / n), 1e-12)
        assert abs(counts[k] - p) <= 4 * se


def test_optimal_value_examples():
    assert optimal_value(ClickModel.position_based((0.8, 0.4), (1.0, 0.5))) == pytest.approx(1.0)
    assert optimal_value(ClickModel.position_based((0.0, 0.0), (1.0, 1.0))) == 0.0
    assert optimal_value(ClickModel.cascade((1.0, 0.3, 0.2), K=2)) == pytest.approx(1.0)


def test_catalog_validation():
    with pytest.raises(ValueError):
        ItemCatalog((0.5, 1.2), 1)
    with pytest.raises(ValueError):
        ItemCatalog((0.5, 0.2), 0)
    with pytest.raises(ValueError):
        ItemCatalog((0.5, 0.2), 3)


def test_position_based_rejects_increasing_chi():
    with pytest.raises(ValueError):
        ClickModel.position_based((0.5, 0.4), (0.2, 0.9))


def test_permutation_inverse():
    a = Permutation([2, 0, 3, 1])
    assert a.inverse.tolist() == [1, 3, 0, 2]
    assert a.swapped(0, 2).order.tolist() == [0, 2, 3, 1]
    with pytest.raises(ValueError):
        Permutation([0, 0, 1])


def test_assumptions_pass_for_standard_models():
    assert check_assumptions(ClickModel.position_based((0.9, 0.7, 0.4, 0.1), (1.0, 0.8))).passed
    assert check_assumptions(ClickModel.cascade((0.9, 0.7, 0.4, 0.1), K=2)).passed


def test_assumptions_fail_for_increasing_chi():
    rep = check_assumptions(ClickModel.factored((0.9, 0.5, 0.2), (0.2, 0.9)))
    assert not rep.passed
    assert not (rep.checks["A2"] and rep.checks["A4"])
    assert rep.counterexample is not None


def test_assumption_enumeration_limit():
    m = ClickModel.position_based(tuple(np.linspace(0.9, 0.1, 8)), (1.0, 0.5))
    with pytest.raises(EnumerationTooLarge):
        check_assumptions(m)
    rep = check_assumptions(m, spot_check=50, rng=np.random.default_rng(0))
    assert rep.mode == "random" and rep.passed


alphas = st.lists(st.floats(0.0, 1.0), min_size=2, max_size=5)


@settings(max_examples=40, deadline=None)
@given(alphas, st.data())
def test_assumptions_hold_on_random_grids(alpha, data):
    L = len(alpha)
    K = data.draw(st.integers(1, L))
    chi = sorted(data.draw(st.lists(st.floats(0.0, 1.0), min_size=K, max_size=K)), reverse=True)
    assert check_assumptions(ClickModel.position_based(tuple(alpha), tuple(chi))).passed
    assert check_assumptions(ClickModel.cascade(tuple(alpha), K)).passed


@settings(max_examples=40, deadline=None)
@given(alphas, st.data())
def test_optimal_dominates_every_permutation(alpha, data):
    L = len(alpha)
    K = data.draw(st.integers(1, L))
    m = ClickModel.cascade(tuple(alpha), K)
    best = optimal_value(m)
    orders = np.array(list(itertools.permutations(range(L))))
    assert np.all(m.expected_clicks(orders) <= best + 1e-12)
    assert np.all(m.slot_probs(orders)[:, K:] == 0.0)
