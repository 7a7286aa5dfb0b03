import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import random_complex
from ssplsc.exceptions import (
    AsymmetricConnectivity,
    BinMismatch,
    DegenerateChannel,
    EmptyRecording,
    InvalidRecording,
    ShapeMismatch,
)
from ssplsc.spectra import (
    Recording,
    SpectralDataset,
    SpectralSample,
    band_frequencies,
    cross_spectrum,
    fourier_coefficients,
    laplacian,
    prepare_spectra,
    segment_trials,
    sensor_connectivity,
)


def naive_dft(x, k):
    n = len(x)
    t = np.arange(n)
    return np.sum(x * np.exp(-2j * np.pi * k * t / n))


# -- Recording / segmentation -------------------------------------------------


def test_recording_rejects_nonfinite_and_bad_rate():
    with pytest.raises(InvalidRecording):
        Recording(np.array([[np.nan], [0.0]]), 200.0, 1.0)
    with pytest.raises(InvalidRecording):
        Recording(np.zeros((10, 1)), 0.0, 1.0)
    with pytest.raises(InvalidRecording):
        Recording(np.zeros((10, 2)), 10.0, 1.0, ["a"])


def test_segment_two_trials():
    rec = Recording(np.arange(800.0).reshape(400, 2), 200.0, 1.0)
    trials = segment_trials(rec)
    assert len(trials) == 2
    assert all(t.shape == (200, 2) for t in trials)


def test_segment_single_trial_is_empty():
    with pytest.raises(EmptyRecording):
        segment_trials(Recording(np.zeros((200, 3)), 200.0, 1.0))


def test_segment_drops_trailing_partial_trial():
    rec = Recording(np.zeros((450, 1)), 200.0, 1.0)
    assert len(segment_trials(rec)) == 2


@given(n_trials=st.integers(2, 6), spt=st.integers(1, 30), ch=st.integers(1, 4))
@settings(max_examples=40, deadline=None)
def test_segment_partition_property(n_trials, spt, ch):
    data = np.arange(n_trials * spt * ch, dtype=float).reshape(n_trials * spt, ch)
    rec = Recording(data, float(spt), 1.0)
    trials = segment_trials(rec)
    assert len(trials) == n_trials
    np.testing.assert_array_equal(np.concatenate(trials), data)


# -- Fourier coefficients -----------------------------------------------------


def test_cosine_magnitude_rectangular():
    t = np.arange(200) / 200.0
    trial = np.cos(2 * np.pi * 10 * t)[:, None]
    s = fourier_coefficients([trial, trial], 200.0, 10.0, window="rect")
    np.testing.assert_allclose(np.abs(s.coefficients), 100.0, rtol=1e-12)


def test_zero_trials_give_zero_coefficients():
    s = fourier_coefficients([np.zeros((200, 3))] * 3, 200.0, 20.0)
    assert np.all(s.coefficients == 0)


@pytest.mark.parametrize("window", ["rect", "hann"])
def test_matches_naive_dft(rng, window):
    trials = [rng.standard_normal((50, 2)) for _ in range(3)]
    s = fourier_coefficients(trials, 50.0, 7.0, window=window)
    taper = np.ones(50) if window == "rect" else 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(50) / 50)
    for i, tr in enumerate(trials):
        for c in range(2):
            ref = naive_dft(tr[:, c] * taper, 7)
            assert abs(s.coefficients[i, c] - ref) <= 1e-9 * abs(ref)


def test_unrepresentable_bin():
    with pytest.raises(BinMismatch):
        fourier_coefficients([np.zeros((200, 1))] * 2, 200.0, 10.5)
    with pytest.raises(BinMismatch):
        fourier_coefficients([np.zeros((200, 1))] * 2, 200.0, 150.0)


@given(a=st.floats(-5, 5), b=st.floats(-5, 5), seed=st.integers(0, 2**31))
@settings(max_examples=30, deadline=None)
def test_fourier_linearity(a, b, seed):
    rng = np.random.default_rng(seed)
    ta = [rng.standard_normal((40, 2)) for _ in range(2)]
    tb = [rng.standard_normal((40, 2)) for _ in range(2)]
    mix = [a * x + b * y for x, y in zip(ta, tb)]
    ca = fourier_coefficients(ta, 40.0, 5.0).coefficients
    cb = fourier_coefficients(tb, 40.0, 5.0).coefficients
    cm = fourier_coefficients(mix, 40.0, 5.0).coefficients
    np.testing.assert_allclose(cm, a * ca + b * cb, atol=1e-9)


def test_spectral_sample_invariants():
    with pytest.raises(ShapeMismatch):
        SpectralSample(np.ones((1, 2)), 10.0)
    with pytest.raises(BinMismatch):
        SpectralSample(np.ones((3, 2)), 150.0, 200.0)


# -- Cross-spectrum -------------------------------------------------------------


def test_cross_spectrum_ones():
    x = SpectralSample(np.ones((2, 1)), 1.0)
    assert cross_spectrum(x, x).s_xy[0, 0] == 2


def test_cross_spectrum_orthogonal():
    x = SpectralSample(np.array([[1.0], [1j]]), 1.0)
    y = SpectralSample(np.array([[1j], [1.0]]), 1.0)
    assert cross_spectrum(x, y).s_xy[0, 0] == 0


def test_cross_spectrum_entrywise_oracle(rng):
    X, Y = random_complex(rng, 5, 3), random_complex(rng, 5, 2)
    block = cross_spectrum(SpectralSample(X, 1.0), SpectralSample(Y, 1.0))
    for i in range(3):
        for j in range(2):
            ref = sum(np.conj(X[t, i]) * Y[t, j] for t in range(5))
            assert abs(block.s_xy[i, j] - ref) < 1e-12
    np.testing.assert_allclose(block.s_yx, block.s_xy.conj().T, atol=1e-12)
    full = block.full()
    np.testing.assert_allclose(full, full.conj().T, atol=1e-12)


def test_cross_spectrum_trial_mismatch(rng):
    with pytest.raises(ShapeMismatch):
        cross_spectrum(SpectralSample(random_complex(rng, 4, 2), 1.0), SpectralSample(random_complex(rng, 5, 2), 1.0))


@given(seed=st.integers(0, 2**31), n=st.integers(2, 8), p=st.integers(1, 5))
@settings(max_examples=40, deadline=None)
def test_auto_spectrum_diagonal_real_nonnegative(seed, n, p):
    X = random_complex(np.random.default_rng(seed), n, p)
    s = cross_spectrum(SpectralSample(X, 1.0), SpectralSample(X, 1.0)).s_xx
    assert np.all(np.diag(s).real >= 0)
    assert np.max(np.abs(np.diag(s).imag)) <= 1e-12


# -- Connectivity and Laplacian -----------------------------------------------


def test_identical_channels_fully_connected(rng):
    v = random_complex(rng, 6)
    c = sensor_connectivity(SpectralSample(np.column_stack([v, v]), 1.0))
    assert c[0, 1] == pytest.approx(1.0, abs=1e-12)
    assert c[0, 0] == 0


def test_orthogonal_channels_disconnected():
    c = sensor_connectivity(SpectralSample(np.array([[1.0, 1j], [1j, 1.0]]), 1.0))
    assert c[0, 1] == pytest.approx(0.0, abs=1e-15)


def test_connectivity_pairwise_oracle(rng):
    bins = [SpectralSample(random_complex(rng, 8, 4), f) for f in (1.0, 2.0, 3.0)]
    c = sensor_connectivity(bins)
    for i in range(4):
        for j in range(4):
            if i == j:
                continue
            vals = []
            for b in bins:
                u, v = b.coefficients[:, i], b.coefficients[:, j]
                vals.append(abs(np.vdot(u, v)) / np.sqrt(np.vdot(u, u).real * np.vdot(v, v).real))
            assert c[i, j] == pytest.approx(np.mean(vals), abs=1e-12)


def test_connectivity_degenerate_channel(rng):
    coefs = random_complex(rng, 5, 3)
    coefs[:, 1] = 0
    with pytest.raises(DegenerateChannel):
        sensor_connectivity(SpectralSample(coefs, 1.0))


@given(seed=st.integers(0, 2**31), p=st.integers(2, 6))
@settings(max_examples=40, deadline=None)
def test_connectivity_range(seed, p):
    c = sensor_connectivity(SpectralSample(random_complex(np.random.default_rng(seed), 4, p), 1.0))
    assert np.all(c >= 0) and np.all(c <= 1 + 1e-12)
    np.testing.assert_array_equal(c, c.T)


def test_laplacian_two_nodes():
    g = laplacian(np.array([[0.0, 1.0], [1.0, 0.0]]))
    np.testing.assert_array_equal(g.laplacian, [[1, -1], [-1, 1]])


def test_laplacian_empty_graph():
    assert np.all(laplacian(np.zeros((3, 3))).laplacian == 0)


def test_laplacian_rejects_asymmetry():
    with pytest.raises(AsymmetricConnectivity):
        laplacian(np.array([[0.0, 1.0], [0.5, 0.0]]))


@st.composite
def graphs(draw):
    n = draw(st.integers(1, 20))
    w = draw(arrays(float, (n, n), elements=st.floats(0, 1)))
    c = np.triu(w, 1)
    c = c + c.T
    u = draw(arrays(float, n, elements=st.floats(-10, 10)))
    return c, u


@given(graphs())
@settings(max_examples=100, deadline=None)
def test_laplacian_quadratic_identity(gu):
    c, u = gu
    g = laplacian(c)
    ref = 0.5 * np.sum(c * (u[:, None] - u[None, :]) ** 2)
    assert u @ g.laplacian @ u == pytest.approx(ref, abs=1e-10 * max(1.0, abs(ref)))
    assert np.max(np.abs(g.laplacian.sum(axis=1))) < 1e-10
    assert np.linalg.eigvalsh(g.laplacian).min() >= -1e-10


# -- Dataset helpers ----------------------------------------------------------


def test_band_frequencies_half_open():
    f = band_frequencies([(15, 30)], 200, 200.0)
    assert f[0] == 15 and f[-1] == 29 and len(f) == 15


def test_prepare_spectra_normalized_columns(rng):
    eeg = Recording(rng.standard_normal((1000, 3)), 100.0, 1.0)
    emg = Recording(rng.standard_normal((1000, 2)), 100.0, 1.0)
    ds = prepare_spectra(eeg, emg, [10.0, 20.0])
    assert ds.x.shape == (2, 10, 3) and ds.y.shape == (2, 10, 2)
    np.testing.assert_allclose(np.linalg.norm(ds.x, axis=1), 1.0)
    assert len(ds.band_indices(15, 25)) == 1


def test_dataset_requires_increasing_freqs(rng):
    with pytest.raises(ValueError):
        SpectralDataset([2.0, 1.0], random_complex(rng, 2, 3, 1), random_complex(rng, 2, 3, 1))


def test_squared_connectivity_is_mean_of_squares(rng):
    bins = [SpectralSample(random_complex(rng, 6, 3), f) for f in (1.0, 2.0)]
    mag = [sensor_connectivity(b) for b in bins]
    sq = sensor_connectivity(bins, measure="squared")
    np.testing.assert_allclose(sq, (mag[0] ** 2 + mag[1] ** 2) / 2, atol=1e-12)
    with pytest.raises(ValueError):
        sensor_connectivity(bins, measure="phase")
