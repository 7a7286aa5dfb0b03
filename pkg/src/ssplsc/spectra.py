"""Per-bin Fourier coefficients, cross-spectra and sensor Laplacians.

Trials are treated as i.i.d. samples: every trial contributes one row of
complex coefficients at each DFT bin.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.signal import windows

from .exceptions import (
    AsymmetricConnectivity,
    BinMismatch,
    DegenerateChannel,
    EmptyRecording,
    InvalidRecording,
    ShapeMismatch,
)

_BIN_TOL = 1e-9


@dataclass
class Recording:
    """A continuous multichannel recording split into fixed-length trials.

    Parameters
    ----------
    samples : ndarray, shape (n_times, n_channels)
        Signal amplitudes, time along the first axis.
    sampling_rate : float
        Sampling rate in Hz.
    trial_length : float
        Trial duration in seconds.
    channel_labels : list of str
        One label per column of ``samples``.
    """

    samples: np.ndarray
    sampling_rate: float
    trial_length: float
    channel_labels: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        if self.samples.ndim != 2:
            raise InvalidRecording("samples must be a (time, channels) matrix")
        if not self.sampling_rate > 0:
            raise InvalidRecording(f"sampling_rate must be positive, got {self.sampling_rate}")
        if not self.trial_length > 0:
            raise InvalidRecording(f"trial_length must be positive, got {self.trial_length}")
        if not np.all(np.isfinite(self.samples)):
            raise InvalidRecording("samples contain non-finite values")
        if not self.channel_labels:
            self.channel_labels = [f"ch{i}" for i in range(self.samples.shape[1])]
        if len(self.channel_labels) != self.samples.shape[1]:
            raise InvalidRecording(
                f"{len(self.channel_labels)} labels for {self.samples.shape[1]} channels"
            )

    @property
    def n_channels(self) -> int:
        return self.samples.shape[1]

    @property
    def samples_per_trial(self) -> int:
        spt = self.trial_length * self.sampling_rate
        if abs(spt - round(spt)) > 1e-6:
            raise InvalidRecording(
                f"trial_length * sampling_rate = {spt} is not an integer sample count"
            )
        return int(round(spt))

    def head(self, n_trials: int) -> "Recording":
        """Recording restricted to its first ``n_trials`` trials."""
        return Recording(
            self.samples[: n_trials * self.samples_per_trial],
            self.sampling_rate,
            self.trial_length,
            list(self.channel_labels),
        )


@dataclass
class SpectralSample:
    """Complex coefficients of ``n`` trials at a single frequency bin."""

    coefficients: np.ndarray
    frequency_bin: float
    sampling_rate: float | None = None

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=complex)
        if self.coefficients.ndim != 2:
            raise ShapeMismatch("coefficients must be a (trials, channels) matrix")
        if self.n < 2:
            raise ShapeMismatch(f"need at least 2 trials, got {self.n}")
        if self.sampling_rate is not None and not (
            0 <= self.frequency_bin <= self.sampling_rate / 2
        ):
            raise BinMismatch(
                f"{self.frequency_bin} Hz outside [0, {self.sampling_rate / 2}] Hz"
            )

    @property
    def n(self) -> int:
        return self.coefficients.shape[0]

    @property
    def n_channels(self) -> int:
        return self.coefficients.shape[1]


@dataclass
class CrossSpectrumBlock:
    s_xx: np.ndarray
    s_xy: np.ndarray
    s_yx: np.ndarray
    s_yy: np.ndarray

    def full(self) -> np.ndarray:
        return np.block([[self.s_xx, self.s_xy], [self.s_yx, self.s_yy]])


@dataclass
class GraphLaplacian:
    connectivity: np.ndarray
    degree: np.ndarray
    laplacian: np.ndarray

    @property
    def size(self) -> int:
        return self.laplacian.shape[0]

    @classmethod
    def empty(cls, size: int) -> "GraphLaplacian":
        """Laplacian of the graph with no edges."""
        z = np.zeros((size, size))
        return cls(z, z.copy(), z.copy())


def segment_trials(recording: Recording) -> list[np.ndarray]:
    """Split a recording into contiguous, non-overlapping trials.

    Trailing samples that do not fill a whole trial are dropped.
    """
    spt = recording.samples_per_trial
    n_trials = recording.samples.shape[0] // spt
    if n_trials < 2:
        raise EmptyRecording(
            f"{recording.samples.shape[0]} samples hold {n_trials} trial(s) of {spt}; need 2"
        )
    return [recording.samples[i * spt : (i + 1) * spt] for i in range(n_trials)]


def _taper(window: str, n_times: int) -> np.ndarray:
    if window == "hann":
        return windows.hann(n_times, sym=False)
    if window in ("rect", "rectangular", "boxcar", None):
        return np.ones(n_times)
    raise ValueError(f"unknown window {window!r}")


def dft_bin_index(frequency: float, n_times: int, sampling_rate: float) -> int:
    k = frequency * n_times / sampling_rate
    if abs(k - round(k)) > _BIN_TOL * max(1.0, abs(k)) or not 0 <= round(k) <= n_times // 2:
        raise BinMismatch(
            f"{frequency} Hz is not a DFT bin for {n_times} samples at {sampling_rate} Hz"
        )
    return int(round(k))


def _stack(trials: Sequence[np.ndarray]) -> np.ndarray:
    arr = np.asarray(trials, dtype=float)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3:
        raise ShapeMismatch("trials must be a list of (samples, channels) matrices")
    return arr


def _zscore(arr: np.ndarray) -> np.ndarray:
    mean = arr.mean(axis=1, keepdims=True)
    std = arr.std(axis=1, keepdims=True)
    std[std == 0] = 1.0
    return (arr - mean) / std


def trial_spectra(
    trials: Sequence[np.ndarray],
    sampling_rate: float,
    frequencies: Sequence[float],
    window: str = "hann",
    zscore: bool = False,
) -> np.ndarray:
    """DFT coefficients of every trial at several bins.

    Returns
    -------
    ndarray, shape (n_bins, n_trials, n_channels)
    """
    arr = _stack(trials)
    if arr.shape[0] < 2:
        raise EmptyRecording("need at least 2 trials")
    n_times = arr.shape[1]
    idx = [dft_bin_index(f, n_times, sampling_rate) for f in frequencies]
    if zscore:
        arr = _zscore(arr)
    spec = np.fft.rfft(arr * _taper(window, n_times)[None, :, None], axis=1)
    return np.ascontiguousarray(np.moveaxis(spec[:, idx, :], 1, 0))


def fourier_coefficients(
    trials: Sequence[np.ndarray],
    sampling_rate: float,
    frequency_bin: float,
    window: str = "hann",
    zscore: bool = False,
) -> SpectralSample:
    """Per-trial DFT at one bin, one complex value per channel."""
    coefs = trial_spectra(trials, sampling_rate, [frequency_bin], window, zscore)[0]
    return SpectralSample(coefs, float(frequency_bin), float(sampling_rate))


def cross_spectrum(x: SpectralSample, y: SpectralSample) -> CrossSpectrumBlock:
    if x.n != y.n:
        raise ShapeMismatch(f"trial counts differ: {x.n} vs {y.n}")
    if x.frequency_bin != y.frequency_bin:
        raise ShapeMismatch(
            f"frequency bins differ: {x.frequency_bin} vs {y.frequency_bin}"
        )
    X, Y = x.coefficients, y.coefficients
    s_xy = X.conj().T @ Y
    return CrossSpectrumBlock(
        s_xx=X.conj().T @ X, s_xy=s_xy, s_yx=s_xy.conj().T, s_yy=Y.conj().T @ Y
    )


def normalize_columns(sample: SpectralSample) -> SpectralSample:
    """Scale every channel to unit l2 norm across trials.

    After scaling, cross-spectrum entries are coherency values, which puts
    the regularization weights on a data-independent scale.
    """
    norms = np.linalg.norm(sample.coefficients, axis=0)
    if np.any(norms == 0):
        raise DegenerateChannel("cannot normalize an all-zero channel")
    return SpectralSample(
        sample.coefficients / norms, sample.frequency_bin, sample.sampling_rate
    )


def _coherence_matrices(coefs: np.ndarray):
    # coefs: (n_bins, n, p) -> (|S| / sqrt(d_i d_j), auto-spectra)
    s = np.einsum("bni,bnj->bij", coefs.conj(), coefs)
    d = np.einsum("bii->bi", s).real.copy()
    denom = np.sqrt(d[:, :, None] * d[:, None, :])
    with np.errstate(invalid="ignore", divide="ignore"):
        coh = np.where(denom > 0, np.abs(s) / np.where(denom > 0, denom, 1.0), 0.0)
    return coh, d


CONNECTIVITY_MEASURES = ("magnitude", "squared")
#: measure used by the analysis pipeline; "squared" shrinks the ~1/sqrt(n)
#: coherence floor that links unrelated sensors
DEFAULT_CONNECTIVITY = "magnitude"


def sensor_connectivity(
    samples: Sequence[SpectralSample] | SpectralSample, measure: str = "magnitude"
) -> np.ndarray:
    """Band-averaged coherence between every pair of sensors.

    Parameters
    ----------
    samples : SpectralSample or sequence of SpectralSample
        One sample per frequency bin of the band.
    measure : {"magnitude", "squared"}
        Average ``|S_ij| / sqrt(S_ii S_jj)`` or its square over the bins.

    The diagonal is zero; no thresholding is applied.
    """
    if measure not in CONNECTIVITY_MEASURES:
        raise ValueError(f"measure must be one of {CONNECTIVITY_MEASURES}")
    if isinstance(samples, SpectralSample):
        samples = [samples]
    if len(samples) == 0:
        raise ValueError("need at least one frequency bin")
    coefs = np.stack([s.coefficients for s in samples])
    coh, d = _coherence_matrices(coefs)
    dead = np.all(d <= 0, axis=0)
    if np.any(dead):
        raise DegenerateChannel(
            f"channels {np.flatnonzero(dead).tolist()} have zero power across the band"
        )
    c = (coh if measure == "magnitude" else coh**2).mean(axis=0)
    c = 0.5 * (c + c.T)
    np.fill_diagonal(c, 0.0)
    return np.clip(c, 0.0, 1.0)


def laplacian(c: np.ndarray, atol: float = 1e-10) -> GraphLaplacian:
    """Graph Laplacian ``L = D - C`` of a weighted undirected graph."""
    c = np.asarray(c, dtype=float)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise ShapeMismatch("connectivity must be square")
    if np.max(np.abs(c - c.T), initial=0.0) > atol:
        raise AsymmetricConnectivity("connectivity matrix is not symmetric")
    if np.any(c < 0):
        raise ValueError("connectivity weights must be nonnegative")
    if np.any(np.abs(np.diag(c)) > atol):
        raise ValueError("connectivity diagonal must be zero")
    c = 0.5 * (c + c.T)
    np.fill_diagonal(c, 0.0)
    degree = np.diag(c.sum(axis=1))
    return GraphLaplacian(connectivity=c, degree=degree, laplacian=degree - c)


@dataclass
class SpectralDataset:
    """Paired coefficients for a set of DFT bins.

    ``x`` has shape (n_bins, n, p) and ``y`` has shape (n_bins, n, q).
    """

    freqs: np.ndarray
    x: np.ndarray
    y: np.ndarray
    sampling_rate: float | None = None

    def __post_init__(self):
        self.freqs = np.asarray(self.freqs, dtype=float)
        self.x = np.asarray(self.x, dtype=complex)
        self.y = np.asarray(self.y, dtype=complex)
        if self.x.ndim != 3 or self.y.ndim != 3:
            raise ShapeMismatch("x and y must be (bins, trials, channels)")
        if self.x.shape[:2] != self.y.shape[:2] or self.x.shape[0] != len(self.freqs):
            raise ShapeMismatch(
                f"incompatible shapes x={self.x.shape} y={self.y.shape} bins={len(self.freqs)}"
            )
        if len(self.freqs) > 1 and np.any(np.diff(self.freqs) <= 0):
            raise ValueError("frequencies must be strictly increasing")

    @property
    def n(self) -> int:
        return self.x.shape[1]

    @property
    def p(self) -> int:
        return self.x.shape[2]

    @property
    def q(self) -> int:
        return self.y.shape[2]

    def __len__(self) -> int:
        return len(self.freqs)

    def sample(self, i: int) -> tuple[SpectralSample, SpectralSample]:
        f = float(self.freqs[i])
        return (
            SpectralSample(self.x[i], f, self.sampling_rate),
            SpectralSample(self.y[i], f, self.sampling_rate),
        )

    def band_indices(self, lo: float, hi: float) -> np.ndarray:
        """Bins whose centre lies in ``[lo, hi)``."""
        return np.flatnonzero((self.freqs >= lo) & (self.freqs < hi))

    def select_bins(self, idx) -> "SpectralDataset":
        idx = np.asarray(idx, dtype=int)
        return SpectralDataset(self.freqs[idx], self.x[idx], self.y[idx], self.sampling_rate)

    def select_trials(self, idx) -> "SpectralDataset":
        idx = np.asarray(idx, dtype=int)
        return SpectralDataset(self.freqs, self.x[:, idx], self.y[:, idx], self.sampling_rate)

    def normalized(self) -> "SpectralDataset":
        """Every channel scaled to unit norm across trials, bin by bin."""
        out = []
        for arr in (self.x, self.y):
            norms = np.linalg.norm(arr, axis=1, keepdims=True)
            if np.any(norms == 0):
                raise DegenerateChannel("cannot normalize an all-zero channel")
            out.append(arr / norms)
        return SpectralDataset(self.freqs, out[0], out[1], self.sampling_rate)

    def cross_spectra(self):
        """Return ``(s_xx, s_xy, s_yy)`` stacked over bins."""
        xc = self.x.conj()
        return (
            np.einsum("bni,bnj->bij", xc, self.x),
            np.einsum("bni,bnj->bij", xc, self.y),
            np.einsum("bni,bnj->bij", self.y.conj(), self.y),
        )

    def laplacians(
        self, lo: float, hi: float, measure: str = DEFAULT_CONNECTIVITY
    ) -> tuple[GraphLaplacian, GraphLaplacian]:
        """Connectivity Laplacians of both modalities averaged over a band."""
        idx = self.band_indices(lo, hi)
        if len(idx) == 0:
            raise BinMismatch(f"no bins in [{lo}, {hi}) Hz")
        lx = laplacian(sensor_connectivity([SpectralSample(self.x[i], self.freqs[i]) for i in idx], measure))
        ly = laplacian(sensor_connectivity([SpectralSample(self.y[i], self.freqs[i]) for i in idx], measure))
        return lx, ly


def band_frequencies(
    bands: Sequence[tuple[float, float]], trial_samples: int, sampling_rate: float
) -> np.ndarray:
    """DFT-native bin centres falling in any ``[lo, hi)`` band."""
    all_f = np.fft.rfftfreq(trial_samples, 1.0 / sampling_rate)
    mask = np.zeros(len(all_f), dtype=bool)
    for lo, hi in bands:
        mask |= (all_f >= lo) & (all_f < hi)
    return all_f[mask]


def prepare_spectra(
    eeg: Recording,
    emg: Recording,
    frequencies: Sequence[float],
    window: str = "hann",
    zscore: bool = True,
    normalize: bool = True,
) -> SpectralDataset:
    """Segment two synchronous recordings and compute paired spectra."""
    if eeg.sampling_rate != emg.sampling_rate or eeg.trial_length != emg.trial_length:
        raise ShapeMismatch("EEG and EMG must share sampling rate and trial length")
    tx, ty = segment_trials(eeg), segment_trials(emg)
    if len(tx) != len(ty):
        raise ShapeMismatch(f"trial counts differ: {len(tx)} vs {len(ty)}")
    sr = eeg.sampling_rate
    ds = SpectralDataset(
        np.asarray(frequencies, dtype=float),
        trial_spectra(tx, sr, frequencies, window, zscore),
        trial_spectra(ty, sr, frequencies, window, zscore),
        sr,
    )
    return ds.normalized() if normalize else ds
