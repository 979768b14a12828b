import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from knockwave.filter import (SelectionResult, apply_knockoff_filter, fdp_hat, importance_stats,
                              knockoff_threshold)


def brute_threshold(W, q, plus=True):
    """Scan every nonzero |W_j| in increasing order; first one with FDP-hat <= q."""
    best = np.inf
    for t in sorted({abs(w) for w in W if w != 0}):
        pos = sum(1 for w in W if w >= t)
        neg = sum(1 for w in W if w <= -t)
        if ((1 if plus else 0) + neg) / max(1, pos) <= q:
            best = t
            break
    return best


def test_worked_example():
    W = np.array([3.0, -1.0, 2.0, 5.0, -2.0, 4.0])
    res = apply_knockoff_filter(W, q=0.5)
    assert res.threshold == 2.0
    assert res.selected.tolist() == [0, 2, 3, 5]
    assert res.fdp_estimate == pytest.approx(0.5)
    assert brute_threshold(W.tolist(), 0.5) == 2.0


def test_nothing_selected_returns_inf():
    res = apply_knockoff_filter(np.array([1.0, -1.0, 0.0]), q=0.1)
    assert np.isinf(res.threshold)
    assert res.selected.size == 0


def test_all_zero():
    assert np.isinf(knockoff_threshold(np.zeros(5), 0.2))


def test_plus_offset_matters():
    W = np.array([1.0, 2.0, 3.0])
    assert np.isinf(apply_knockoff_filter(W, 0.3, plus=True).threshold)
    assert apply_knockoff_filter(W, 0.3, plus=False).threshold == 1.0


_W = arrays(float, st.integers(1, 40),
            elements=st.sampled_from([0.0, 0.5, 1.0, 2.0, 3.0]) | st.floats(-5, 5, width=32))


@given(_W.map(lambda w: w * np.where(np.arange(w.size) % 3 == 0, -1, 1)),
       st.floats(0.01, 0.99), st.booleans())
def test_matches_brute_force(W, q, plus):
    assert knockoff_threshold(W, q, plus) == brute_threshold(W.tolist(), q, plus)


@given(_W, st.floats(0.01, 0.98), st.floats(0.0, 0.5))
def test_monotone_in_q(W, q, dq):
    q2 = min(q + dq, 0.99)
    small = set(apply_knockoff_filter(W, q).selected.tolist())
    large = set(apply_knockoff_filter(W, q2).selected.tolist())
    assert small <= large


@given(_W, st.floats(0.01, 0.99), st.floats(1e-3, 1e3))
def test_scale_invariant(W, q, c):
    a = apply_knockoff_filter(W, q).selected
    b = apply_knockoff_filter(W * c, q).selected
    # scaling can merge distinct floats only through rounding; compare on exactly representable input
    if np.array_equal(np.unique(np.abs(W * c)) / c, np.unique(np.abs(W))):
        np.testing.assert_array_equal(a, b)


@given(_W, st.floats(0.01, 0.99))
def test_selection_respects_estimate(W, q):
    res = apply_knockoff_filter(W, q)
    if res.selected.size:
        assert fdp_hat(W, res.threshold) <= q
        assert np.all(W[res.selected] > 0)


@pytest.mark.parametrize("q", [0.0, 1.0, -0.1, 1.5])
def test_bad_q(q):
    with pytest.raises(ValueError):
        apply_knockoff_filter(np.ones(3), q)


def test_nonfinite_w():
    with pytest.raises(ValueError):
        apply_knockoff_filter(np.array([1.0, np.nan]), 0.1)


def test_importance_stats_multiclass():
    coefs = np.array([[1.0, -2.0, 0.5, 0.0], [-1.0, 0.0, 0.0, 3.0]])
    st_ = importance_stats(coefs)
    np.testing.assert_array_equal(st_.Z, [2.0, 2.0, 0.5, 3.0])
    np.testing.assert_array_equal(st_.W, [1.5, -1.0])
    with pytest.raises(ValueError):
        importance_stats(np.ones(5), p=2)


def test_csv_roundtrip(tmp_path):
    W = np.array([3.0, -1.0, 2.0, 5.0, 0.0, 4.0, -0.5])
    res = apply_knockoff_filter(W, q=0.5)
    assert res.threshold == 1.0
    res.save(str(tmp_path / "sel.csv"))
    back = SelectionResult.from_csv(tmp_path / "sel.csv", q=0.5)
    np.testing.assert_array_equal(back.W, W)
    np.testing.assert_array_equal(back.selected, res.selected)
    assert back.threshold == res.threshold
    assert (tmp_path / "sel.json").exists()


def test_csv_without_sidecar_uses_smallest_selected(tmp_path):
    res = apply_knockoff_filter(np.array([3.0, -1.0, 2.0, 5.0, -2.0, 4.0]), q=0.5)
    res.to_csv(tmp_path / "sel.csv")
    back = SelectionResult.from_csv(tmp_path / "sel.csv")
    assert back.threshold == 2.0
