import json

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from knockwave.wavelet import (COIF4_LOWPASS, WaveletBasis, WaveletFeatures, coefficient_centers,
                               coiflet24, dwt, haar, idwt, level_lengths, reconstruct_masked)


def reference_dwt(x, lo, levels):
    """Loop-based convolve-and-downsample with half-sample symmetric extension."""
    F = lo.size
    hi = np.array([(-1) ** (k + 1) * lo[F - 1 - k] for k in range(F)])
    blocks = []
    a = np.asarray(x, dtype=float)
    for _ in range(levels):
        n = a.size

        def at(i):
            # reflect about the half-sample points -1/2 and n-1/2
            while i < 0 or i >= n:
                i = -i - 1 if i < 0 else 2 * n - 1 - i
            return a[i]

        out_len = (n + F - 1) // 2
        ca, cd = np.zeros(out_len), np.zeros(out_len)
        for o in range(out_len):
            pos = 2 * o + 1
            for k in range(F):
                v = at(pos - k)
                ca[o] += lo[k] * v
                cd[o] += hi[k] * v
        blocks.append(cd)
        a = ca
    return np.concatenate([a] + blocks[::-1])


def reference_idwt(coeffs, lengths, m, lo):
    """Loop-based synthesis: upsample each block, convolve with the reversed filters, crop."""
    F = lo.size
    hi = np.array([(-1) ** (k + 1) * lo[F - 1 - k] for k in range(F)])
    rec_lo, rec_hi = lo[::-1], hi[::-1]
    edges = np.concatenate([[0], np.cumsum(lengths)])
    a = coeffs[edges[0]:edges[1]]
    levels = len(lengths) - 1
    for lev in range(levels):
        d = coeffs[edges[lev + 1]:edges[lev + 2]]
        N = a.size
        full = np.zeros(2 * N - 1 + F - 1)
        for k in range(N):
            for t in range(F):
                full[2 * k + t] += a[k] * rec_lo[t] + d[k] * rec_hi[t]
        out = full[F - 2:F - 2 + 2 * N - F + 2]
        target = lengths[lev + 2] if lev + 2 < len(lengths) else m
        a = out[:target]
    return a


def test_filter_invariants():
    b = coiflet24()
    assert b.taps == 24
    assert abs(b.lowpass.sum() - np.sqrt(2)) < 1e-10
    assert abs(b.lowpass @ b.highpass) < 1e-10
    assert abs(b.lowpass @ b.lowpass - 1.0) < 1e-10
    # even-shift orthogonality of the lowpass filter
    for k in range(1, 12):
        assert abs(b.lowpass[2 * k:] @ b.lowpass[:-2 * k]) < 1e-10


def test_992_samples_give_1105_coefficients():
    f = dwt(np.random.default_rng(0).random(992))
    assert f.total == 1105
    assert list(f.level_lengths) == [53, 53, 83, 144, 265, 507]
    assert list(f.block_slices()) == ["A5", "D5", "D4", "D3", "D2", "D1"]


@pytest.mark.parametrize("m", [24, 25, 64, 100, 257, 992, 4096])
def test_length_recurrence(m):
    lens, cur = [], m
    for _ in range(5):
        cur = (cur + 23) // 2
        lens.append(cur)
    assert level_lengths(m, 24, 5) == [lens[-1]] + lens[::-1]


def test_length_recurrence_all_sizes():
    for m in range(24, 4097):
        lengths = level_lengths(m, 24, 5)
        cur = m
        for lev in range(5):
            cur = (cur + 23) // 2
            assert lengths[5 - lev] == cur
        assert lengths[0] == lengths[1]


@pytest.mark.parametrize("m", [24, 64, 100, 131])
def test_matches_loop_reference(m):
    x = np.random.default_rng(m).standard_normal(m)
    np.testing.assert_allclose(dwt(x).coefficients, reference_dwt(x, COIF4_LOWPASS, 5),
                               atol=1e-12)


def test_matches_pywavelets():
    pywt = pytest.importorskip("pywt")
    x = np.random.default_rng(1).standard_normal((3, 992))
    ref = np.concatenate(pywt.wavedec(x, "coif4", mode="symmetric", level=5, axis=1), axis=1)
    np.testing.assert_allclose(dwt(x).coefficients, ref, atol=1e-12)


def test_zero_and_constant_signals():
    assert np.all(dwt(np.zeros(100)).coefficients == 0)
    c = 3.7
    f = dwt(np.full(992, c))
    for name in ("D5", "D4", "D3", "D2", "D1"):
        assert np.abs(f.block(name)).max() <= 1e-8 * c
    assert np.abs(f.block("A5")).min() > 0


@pytest.mark.parametrize("index", [12, 37, 63, 92, 130, 180])
def test_unit_coefficient_matches_reference_synthesis(index):
    m = 100
    f = dwt(np.zeros(m))
    e = np.zeros(f.total)
    e[index] = 1.0
    got = idwt(WaveletFeatures(e, f.level_lengths, m))
    ref = reference_idwt(e, list(f.level_lengths), m, COIF4_LOWPASS)
    np.testing.assert_allclose(got, ref, atol=1e-12)
    assert np.abs(got).max() > 0.01


def test_reference_pair_round_trips():
    x = np.random.default_rng(9).standard_normal(80)
    c = reference_dwt(x, COIF4_LOWPASS, 5)
    f = dwt(x)
    np.testing.assert_allclose(reference_idwt(c, list(f.level_lengths), 80, COIF4_LOWPASS), x,
                               atol=1e-10)


def test_zero_features_give_zero_signal():
    f = dwt(np.zeros(100))
    assert np.all(idwt(f) == 0)


@given(st.sampled_from([24, 37, 64, 100, 199, 992]), st.integers(0, 2 ** 31))
def test_round_trip(m, seed):
    x = np.random.default_rng(seed).standard_normal(m) * 10
    assert np.abs(idwt(dwt(x)) - x).max() < 1e-8


@given(arrays(np.float64, 64, elements=st.floats(-1e3, 1e3)),
       arrays(np.float64, 64, elements=st.floats(-1e3, 1e3)),
       st.floats(-5, 5), st.floats(-5, 5))
def test_linearity(x, y, a, b):
    lhs = dwt(a * x + b * y).coefficients
    rhs = a * dwt(x).coefficients + b * dwt(y).coefficients
    assert np.abs(lhs - rhs).max() <= 1e-10 * max(1.0, np.abs(lhs).max())


@given(st.integers(0, 2 ** 31))
def test_periodized_mode_is_isometric(seed):
    basis = coiflet24(mode="periodization")
    x = np.random.default_rng(seed).standard_normal(1024)
    f = dwt(x, basis)
    assert f.total == 1024
    assert abs(np.linalg.norm(f.coefficients) - np.linalg.norm(x)) < 1e-8
    assert np.abs(idwt(f, basis) - x).max() < 1e-8


def test_haar_known_values():
    f = dwt(np.array([1.0, 3.0, 5.0, 7.0]), haar(levels=1, mode="periodization"))
    np.testing.assert_allclose(f.coefficients,
                               np.array([4, 12, -2, -2]) / np.sqrt(2), atol=1e-14)


def test_batch_equals_rowwise():
    X = np.random.default_rng(2).standard_normal((4, 100))
    batch = dwt(X).coefficients
    for i in range(4):
        np.testing.assert_allclose(batch[i], dwt(X[i]).coefficients, atol=1e-14)


def test_masked_reconstruction():
    x = np.random.default_rng(3).standard_normal(100)
    f = dwt(x)
    np.testing.assert_allclose(reconstruct_masked(f, np.arange(f.total)), x, atol=1e-8)
    assert np.all(reconstruct_masked(f, []) == 0)
    # additivity over a partition of the blocks
    parts = [reconstruct_masked(f, np.arange(sl.start, sl.stop))
             for sl in f.block_slices().values()]
    np.testing.assert_allclose(np.sum(parts, axis=0), x, atol=1e-8)
    with pytest.raises(IndexError):
        reconstruct_masked(f, [f.total])


def test_coefficient_centers_follow_position():
    f = dwt(np.zeros(992))
    centers = coefficient_centers(f)
    d2 = f.block_slices()["D2"]
    inner = centers[d2][20:-20]
    assert np.all(np.diff(inner) > 0)


def test_errors():
    with pytest.raises(ValueError):
        dwt(np.zeros(10))
    with pytest.raises(ValueError):
        dwt(np.array([np.nan] * 64))
    f = dwt(np.zeros(64))
    with pytest.raises(ValueError):
        idwt(WaveletFeatures(f.coefficients, f.level_lengths, 70))
    with pytest.raises(ValueError):
        WaveletBasis(lowpass=np.ones(3) / 3)


def test_basis_serialization_round_trip():
    b = coiflet24()
    b2 = WaveletBasis.from_dict(json.loads(json.dumps(b.to_dict())))
    np.testing.assert_array_equal(b.lowpass, b2.lowpass)
    assert (b2.levels, b2.mode) == (b.levels, b.mode)
