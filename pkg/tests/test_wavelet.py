import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gasgru import wavelet
from gasgru.dataset import N_NODES, GasLabel, Sample
from gasgru.wavelet import DB5, dwt1, idwt1

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def test_filter_identities():
    h, g = DB5.lowpass, DB5.highpass
    assert len(DB5) == 10
    assert abs(h.sum() - np.sqrt(2)) < 1e-10
    assert abs((h * h).sum() - 1) < 1e-10
    for m in range(1, 5):
        assert abs(np.dot(h[2 * m:], h[:-2 * m])) < 1e-10
    assert abs(g.sum()) < 1e-10
    assert abs(np.dot(h, g)) < 1e-10


def test_matches_direct_definition():
    x = np.random.default_rng(0).normal(size=32)
    a, d = dwt1(x)
    for i in range(16):
        idx = (2 * i + np.arange(10)) % 32
        assert a[i] == pytest.approx(np.dot(DB5.lowpass, x[idx]), abs=1e-13)
        assert d[i] == pytest.approx(np.dot(DB5.highpass, x[idx]), abs=1e-13)


@pytest.mark.parametrize("degree", range(5))
def test_vanishing_moments(degree):
    t = np.linspace(-1, 1, 256)
    _, d = dwt1(t**degree)
    interior = d[: len(d) - 5]  # the last taps wrap around the period
    assert np.abs(interior).max() <= 1e-6


@settings(max_examples=30, deadline=None)
@given(st.sampled_from([16, 64, 2000]).flatmap(lambda n: arrays(np.float64, n, elements=finite)))
def test_perfect_reconstruction_and_energy(x):
    a, d = dwt1(x)
    np.testing.assert_allclose(idwt1(a, d), x, atol=1e-9 * max(1.0, np.abs(x).max()))
    e = (x * x).sum()
    if e > 0:
        assert abs((a * a).sum() + (d * d).sum() - e) <= 1e-8 * e


def test_columnwise():
    x = np.random.default_rng(1).normal(size=(64, 2))
    a, d = dwt1(x)
    a0, d0 = dwt1(x[:, 0])
    np.testing.assert_array_equal(a[:, 0], a0)
    np.testing.assert_array_equal(d[:, 0], d0)


@pytest.mark.parametrize("n", [15, 8])
def test_bad_lengths(n):
    with pytest.raises(ValueError):
        dwt1(np.ones(n))


def test_idwt_shape_mismatch():
    with pytest.raises(ValueError, match="subband shapes"):
        idwt1(np.ones(8), np.ones(9))


def test_extract_features_layout(small_ds):
    s = small_ds.samples[0]
    fs = wavelet.extract_features(s)
    assert fs.values.shape == (N_NODES // 2, 4)
    assert fs.channels == ("TGS813:approx", "TGS813:detail", "TGS2611:approx", "TGS2611:detail")
    a1, d1 = dwt1(s.readings[:, 1])
    np.testing.assert_array_equal(fs.values[:, 2], a1)
    np.testing.assert_array_equal(fs.values[:, 3], d1)


def test_standardizer(small_ds):
    feats = [wavelet.extract_features(s) for s in small_ds]
    std = wavelet.fit_standardizer(feats)
    z = np.concatenate([std.apply(f).values for f in feats])
    np.testing.assert_allclose(z.mean(axis=0), 0, atol=1e-10)
    np.testing.assert_allclose(z.std(axis=0), 1, atol=1e-10)
    back = wavelet.Standardizer.from_dict(std.to_dict())
    np.testing.assert_array_equal(back.mean, std.mean)
    np.testing.assert_array_equal(back.std, std.std)


def test_constant_channel_maps_to_zero():
    s = Sample("c", GasLabel.H2, 1.0, 0.0, np.full((N_NODES, 1), 3.7))
    fs = wavelet.extract_features(s)
    std = wavelet.fit_standardizer([fs, fs])
    assert std.std[0] == wavelet.STD_FLOOR
    assert np.all(np.isfinite(std.apply(fs).values))
    assert np.all(std.apply(fs).values[:, 0] == 0)


def test_standardizer_width_mismatch(small_ds):
    fs = wavelet.extract_features(small_ds.samples[0])
    std = wavelet.Standardizer(np.zeros(2), np.ones(2))
    with pytest.raises(ValueError, match="channels"):
        std.apply(fs)
    with pytest.raises(ValueError):
        wavelet.fit_standardizer([])
