"""Synthetic paired EEG/EMG recordings with a known coupled source.

Each subject gets one band-limited stochastic source. It reaches a compact
patch of EEG channels through Gaussian spatial weights and a subset of EMG
channels after a conduction delay and a random per-trial gain. Independent
noise (1/f for EEG, white for EMG) is scaled so the mean signal-to-noise
power ratio over the active channels equals the configured SNR.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .exceptions import ConfigError
from .spectra import Recording


@dataclass(frozen=True)
class SimConfig:
    n_subjects: int = 15
    eeg_channels: int = 32
    emg_channels: int = 10
    trials_per_subject: int = 100
    trial_length: float = 1.0
    sampling_rate: float = 200.0
    snr_eeg: float = 0.1
    snr_emg: float = 0.1
    coupling_band: tuple = (18.0, 24.0)
    active_eeg_fraction: float = 0.25
    active_emg_fraction: float = 0.25
    eeg_noise: str = "pink"
    emg_noise: str = "white"
    delay: float = 0.02
    gain_spread: float = 0.5
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "coupling_band", tuple(float(f) for f in self.coupling_band))
        for name in ("n_subjects", "eeg_channels", "emg_channels", "trials_per_subject"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if not (self.trial_length > 0 and self.sampling_rate > 0):
            raise ConfigError("trial_length and sampling_rate must be positive")
        spt = self.trial_length * self.sampling_rate
        if abs(spt - round(spt)) > 1e-9:
            raise ConfigError("trial_length * sampling_rate must be an integer")
        if not (self.snr_eeg > 0 and self.snr_emg > 0):
            raise ConfigError("SNRs must be positive")
        lo, hi = self.coupling_band if len(self.coupling_band) == 2 else (None, None)
        if lo is None or not (0 <= lo < hi <= self.sampling_rate / 2):
            raise ConfigError(f"coupling_band {self.coupling_band} must lie within Nyquist")
        for name in ("active_eeg_fraction", "active_emg_fraction"):
            if not 0 < getattr(self, name) <= 1:
                raise ConfigError(f"{name} must lie in (0, 1]")
        for name in ("eeg_noise", "emg_noise"):
            if getattr(self, name) not in ("pink", "white"):
                raise ConfigError(f"{name} must be 'pink' or 'white'")
        if self.delay < 0 or not 0 <= self.gain_spread < 1:
            raise ConfigError("delay must be >= 0 and gain_spread in [0, 1)")

    @property
    def samples_per_trial(self) -> int:
        return int(round(self.trial_length * self.sampling_rate))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["coupling_band"] = list(self.coupling_band)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown simulation keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class GroundTruth:
    eeg_active: np.ndarray
    emg_active: np.ndarray
    eeg_weights: np.ndarray
    emg_weights: np.ndarray
    coupling_band: tuple
    coupling_frequency: float
    delay_samples: int
    eeg_noise_scale: float
    emg_noise_scale: float

    def to_dict(self) -> dict:
        return {
            "eeg_active": self.eeg_active.astype(int).tolist(),
            "emg_active": self.emg_active.astype(int).tolist(),
            "eeg_weights": self.eeg_weights.tolist(),
            "emg_weights": self.emg_weights.tolist(),
            "coupling_band": list(self.coupling_band),
            "coupling_frequency": self.coupling_frequency,
            "delay_samples": self.delay_samples,
            "eeg_noise_scale": self.eeg_noise_scale,
            "emg_noise_scale": self.emg_noise_scale,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GroundTruth":
        return cls(
            eeg_active=np.asarray(d["eeg_active"], dtype=bool),
            emg_active=np.asarray(d["emg_active"], dtype=bool),
            eeg_weights=np.asarray(d["eeg_weights"], dtype=float),
            emg_weights=np.asarray(d["emg_weights"], dtype=float),
            coupling_band=tuple(d["coupling_band"]),
            coupling_frequency=float(d["coupling_frequency"]),
            delay_samples=int(d["delay_samples"]),
            eeg_noise_scale=float(d["eeg_noise_scale"]),
            emg_noise_scale=float(d["emg_noise_scale"]),
        )


@dataclass
class Subject:
    subject_id: str
    eeg: Recording
    emg: Recording
    ground_truth: GroundTruth


@dataclass
class SyntheticDataset:
    config: SimConfig
    subjects: list[Subject] = field(default_factory=list)


@dataclass
class SubjectComponents:
    """Signal and noise parts of one subject before summation."""

    eeg_signal: np.ndarray
    eeg_noise: np.ndarray
    emg_signal: np.ndarray
    emg_noise: np.ndarray
    ground_truth: GroundTruth


def _bandlimited(rng, n, fs, lo, hi):
    spec = np.fft.rfft(rng.standard_normal(n))
    f = np.fft.rfftfreq(n, 1.0 / fs)
    spec[(f < lo) | (f > hi)] = 0.0
    x = np.fft.irfft(spec, n)
    return x / x.std()


def _noise(rng, n, channels, fs, kind):
    white = rng.standard_normal((n, channels))
    if kind == "white":
        return white
    spec = np.fft.rfft(white, axis=0)
    f = np.fft.rfftfreq(n, 1.0 / fs)
    shape = np.zeros_like(f)
    shape[1:] = 1.0 / np.sqrt(f[1:])
    x = np.fft.irfft(spec * shape[:, None], n, axis=0)
    return x / x.std(axis=0, keepdims=True)


def _grid_positions(n):
    cols = math.ceil(math.sqrt(n))
    idx = np.arange(n)
    return np.column_stack([idx // cols, idx % cols]).astype(float)


def _eeg_weights(rng, p, fraction):
    k = max(1, int(round(fraction * p)))
    pos = _grid_positions(p)
    centre = pos[rng.integers(p)]
    d2 = ((pos - centre) ** 2).sum(axis=1)
    # nearest k channels, index order breaks distance ties
    active_idx = np.lexsort((np.arange(p), d2))[:k]
    sigma2 = max(k / 4.0, 0.5)
    w = np.zeros(p)
    w[active_idx] = np.exp(-d2[active_idx] / (2.0 * sigma2))
    mask = np.zeros(p, dtype=bool)
    mask[active_idx] = True
    return w, mask


def _emg_weights(rng, q, fraction):
    k = max(1, int(round(fraction * q)))
    active_idx = rng.choice(q, size=k, replace=False)
    w = np.zeros(q)
    w[active_idx] = rng.uniform(0.5, 1.0, size=k)
    mask = np.zeros(q, dtype=bool)
    mask[active_idx] = True
    return w, mask


def _noise_scale(signal, noise, mask, snr):
    if math.isinf(snr):
        return 0.0
    ps = (signal[:, mask] ** 2).mean(axis=0)
    pn = (noise[:, mask] ** 2).mean(axis=0)
    # choose k so that mean(ps / (k^2 pn)) == snr
    return math.sqrt(float(np.mean(ps / pn)) / snr)


def subject_components(config: SimConfig, index: int) -> SubjectComponents:
    """Generate the separate signal and noise parts of subject ``index``."""
    rng = np.random.default_rng([config.seed, index])
    fs = config.sampling_rate
    spt = config.samples_per_trial
    n_trials = config.trials_per_subject
    total = spt * n_trials
    delay = int(round(config.delay * fs))
    lo, hi = config.coupling_band

    source = _bandlimited(rng, total + delay, fs, lo, hi)
    w_eeg, m_eeg = _eeg_weights(rng, config.eeg_channels, config.active_eeg_fraction)
    w_emg, m_emg = _emg_weights(rng, config.emg_channels, config.active_emg_fraction)
    gains = 1.0 + config.gain_spread * rng.uniform(-1.0, 1.0, size=n_trials)

    eeg_sig = source[delay:, None] * w_eeg[None, :]
    emg_src = source[:total] * np.repeat(gains, spt)
    emg_sig = emg_src[:, None] * w_emg[None, :]

    eeg_noise = _noise(rng, total, config.eeg_channels, fs, config.eeg_noise)
    emg_noise = _noise(rng, total, config.emg_channels, fs, config.emg_noise)
    k_eeg = _noise_scale(eeg_sig, eeg_noise, m_eeg, config.snr_eeg)
    k_emg = _noise_scale(emg_sig, emg_noise, m_emg, config.snr_emg)

    truth = GroundTruth(
        eeg_active=m_eeg,
        emg_active=m_emg,
        eeg_weights=w_eeg,
        emg_weights=w_emg,
        coupling_band=(lo, hi),
        coupling_frequency=0.5 * (lo + hi),
        delay_samples=delay,
        eeg_noise_scale=k_eeg,
        emg_noise_scale=k_emg,
    )
    return SubjectComponents(eeg_sig, k_eeg * eeg_noise, emg_sig, k_emg * emg_noise, truth)


def generate_subject(config: SimConfig, index: int) -> Subject:
    c = subject_components(config, index)
    fs, tl = config.sampling_rate, config.trial_length
    eeg = Recording(c.eeg_signal + c.eeg_noise, fs, tl, [f"EEG{i:03d}" for i in range(config.eeg_channels)])
    emg = Recording(c.emg_signal + c.emg_noise, fs, tl, [f"EMG{i:02d}" for i in range(config.emg_channels)])
    return Subject(f"sub-{index + 1:02d}", eeg, emg, c.ground_truth)


def generate(config: SimConfig = SimConfig()) -> SyntheticDataset:
    """Simulate every subject; fully determined by ``config.seed``."""
    return SyntheticDataset(config, [generate_subject(config, i) for i in range(config.n_subjects)])
