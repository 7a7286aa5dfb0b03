"""Per-subject analysis: spectra, parameter selection, CSR and patterns.

Report objects serialise to plain JSON-compatible dicts; ``from_dict``
inverts ``to_dict`` exactly.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import __version__
from ._backend import BACKEND
from .evaluation import (
    DEFAULT_BANDS,
    DEFAULT_GRID,
    Band,
    CSRReport,
    CVResult,
    Method,
    align_and_average_patterns,
    cross_validate_params,
    permutation_csr,
)
from .exceptions import ConfigError, SSPLSCError
from .optim import RegParams, SolverConfig
from .spectra import (
    CONNECTIVITY_MEASURES,
    DEFAULT_CONNECTIVITY,
    Recording,
    band_frequencies,
    prepare_spectra,
)

TUNABLE = ("splsc", "ssplsc")


def _f(x):
    """JSON-safe float: NaN becomes None."""
    if x is None:
        return None
    x = float(x)
    return None if math.isnan(x) else x


def _arr(a):
    return None if a is None else [_f(v) for v in np.asarray(a, dtype=float)]


def _unarr(v):
    return None if v is None else np.array([np.nan if x is None else x for x in v], dtype=float)


def derive_seed(*parts: int) -> int:
    """Stable 32-bit seed from a tuple of integers."""
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


@dataclass(frozen=True)
class RunConfig:
    bands: tuple = DEFAULT_BANDS
    solver: str = "ssplsc"
    params: RegParams | str = "auto"
    n_permutations: int = 500
    seed: int = 0
    grid: tuple = DEFAULT_GRID
    window: str = "hann"
    zscore: bool = True
    normalize: bool = True
    n_trials: int | None = None
    solver_config: SolverConfig = SolverConfig()
    cacoh_pca: float | None = None
    connectivity: str = DEFAULT_CONNECTIVITY

    def __post_init__(self):
        if self.connectivity not in CONNECTIVITY_MEASURES:
            raise ConfigError(f"connectivity must be one of {CONNECTIVITY_MEASURES}")
        if self.solver not in ("plsc", "splsc", "ssplsc", "cacoh"):
            raise ConfigError(f"unknown solver {self.solver!r}")
        if isinstance(self.params, str) and self.params != "auto":
            raise ConfigError("params must be 'auto' or a mapping of regularization weights")
        if self.n_permutations < 1:
            raise ConfigError("n_permutations must be >= 1")
        names = [b.name for b in self.bands]
        if len(set(names)) != len(names) or not names:
            raise ConfigError("band names must be unique and nonempty")

    def to_dict(self) -> dict:
        return {
            "bands": {b.name: [b.lo, b.hi] for b in self.bands},
            "solver": self.solver,
            "params": self.params if isinstance(self.params, str) else self.params.as_dict(),
            "n_permutations": self.n_permutations,
            "seed": self.seed,
            "grid": list(self.grid),
            "window": self.window,
            "zscore": self.zscore,
            "normalize": self.normalize,
            "n_trials": self.n_trials,
            "solver_config": {
                "max_outer_iters": self.solver_config.max_outer_iters,
                "rel_tol": self.solver_config.rel_tol,
                "inner_prox_steps": self.solver_config.inner_prox_steps,
                "lm_damping": self.solver_config.lm_damping,
                "phase_init": self.solver_config.phase_init,
                "init": self.solver_config.init,
            },
            "cacoh_pca": self.cacoh_pca,
            "connectivity": self.connectivity,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown analysis keys: {sorted(unknown)}")
        try:
            if "bands" in d:
                d["bands"] = tuple(Band(name, float(lo), float(hi)) for name, (lo, hi) in d["bands"].items())
            if "params" in d and not isinstance(d["params"], str):
                d["params"] = RegParams(**d["params"])
            if "grid" in d:
                d["grid"] = tuple(float(g) for g in d["grid"])
            if "solver_config" in d:
                d["solver_config"] = SolverConfig(**d["solver_config"])
            return cls(**d)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def provenance(self) -> dict:
        return make_provenance({"analysis": self.to_dict()}, self.seed)


def config_hash(config: dict) -> str:
    """sha256 of the canonical (sorted-key, compact) JSON encoding."""
    text = json.dumps(config, sort_keys=True, separators=(",", ":"), allow_nan=False)
    return hashlib.sha256(text.encode()).hexdigest()


def make_provenance(config: dict, seed: int) -> dict:
    """Provenance block; ``config`` is in the config-file layout so it can be rerun."""
    return {
        "tool": "ssplsc",
        "version": __version__,
        "backend": BACKEND,
        "seed": seed,
        "config_hash": config_hash(config),
        "config": config,
    }


def band_to_dict(b: Band) -> dict:
    return {"name": b.name, "lo": b.lo, "hi": b.hi}


def band_from_dict(d: dict) -> Band:
    return Band(d["name"], float(d["lo"]), float(d["hi"]))


def csr_to_dict(r: CSRReport) -> dict:
    return {
        "band": band_to_dict(r.band),
        "csr": _f(r.csr),
        "frequencies": _arr(r.frequencies),
        "real_coherence": _arr(r.real_coherence),
        "permuted_mean": _arr(r.permuted_mean),
        "n_permutations": r.n_permutations,
        "seed": r.seed,
        "peak_frequency": _f(r.peak_frequency),
        "redraws": r.redraws,
    }


def csr_from_dict(d: dict) -> CSRReport:
    return CSRReport(
        band=band_from_dict(d["band"]),
        csr=float(d["csr"]),
        frequencies=_unarr(d["frequencies"]),
        real_coherence=_unarr(d["real_coherence"]),
        permuted_mean=_unarr(d["permuted_mean"]),
        n_permutations=int(d["n_permutations"]),
        seed=int(d["seed"]),
        peak_frequency=float(d["peak_frequency"]),
        redraws=int(d.get("redraws", 0)),
    )


def _surface_to_list(surface: dict) -> list:
    return [
        {"lambda1": k[0], "lambda2": k[1], "gamma1": k[2], "gamma2": k[3], "cost": _f(v) if math.isfinite(v) else None}
        for k, v in surface.items()
    ]


def _surface_from_list(rows: list) -> dict:
    return {
        (r["lambda1"], r["lambda2"], r["gamma1"], r["gamma2"]): (math.inf if r["cost"] is None else r["cost"])
        for r in rows
    }


def cv_to_dict(cv: CVResult) -> dict:
    return {
        "chosen": cv.chosen.as_dict(),
        "folds": cv.folds,
        "gamma_surface": _surface_to_list(cv.gamma_surface),
        "cost_surface": _surface_to_list(cv.cost_surface),
    }


def cv_from_dict(d: dict) -> CVResult:
    return CVResult(
        chosen=RegParams(**d["chosen"]),
        cost_surface=_surface_from_list(d["cost_surface"]),
        folds=int(d["folds"]),
        gamma_surface=_surface_from_list(d["gamma_surface"]),
    )


@dataclass
class BinRecord:
    frequency: float
    coherence: float
    phi: float
    alpha: np.ndarray | None
    beta: np.ndarray | None
    objective_trace: np.ndarray | None
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "frequency": _f(self.frequency),
            "coherence": _f(self.coherence),
            "phi": _f(self.phi),
            "alpha": _arr(self.alpha),
            "beta": _arr(self.beta),
            "objective_trace": _arr(self.objective_trace),
            "error": self.error,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BinRecord":
        return cls(
            frequency=float(d["frequency"]),
            coherence=np.nan if d["coherence"] is None else float(d["coherence"]),
            phi=np.nan if d["phi"] is None else float(d["phi"]),
            alpha=_unarr(d["alpha"]),
            beta=_unarr(d["beta"]),
            objective_trace=_unarr(d["objective_trace"]),
            error=d["error"],
        )


class _DictEq:
    def __eq__(self, other):
        if type(other) is not type(self):
            return NotImplemented
        return self.to_dict() == other.to_dict()


@dataclass(eq=False)
class BandReport(_DictEq):
    band: Band
    solver: str
    params: RegParams
    csr: CSRReport
    spectrum: list[BinRecord]
    peak_frequency: float | None
    cv: CVResult | None = None

    @property
    def peak(self) -> BinRecord | None:
        good = [b for b in self.spectrum if b.error is None]
        return max(good, key=lambda b: b.coherence) if good else None

    def to_dict(self) -> dict:
        return {
            "band": band_to_dict(self.band),
            "solver": self.solver,
            "params": self.params.as_dict(),
            "csr": csr_to_dict(self.csr),
            "spectrum": [b.to_dict() for b in self.spectrum],
            "peak_frequency": _f(self.peak_frequency),
            "cv": None if self.cv is None else cv_to_dict(self.cv),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BandReport":
        return cls(
            band=band_from_dict(d["band"]),
            solver=d["solver"],
            params=RegParams(**d["params"]),
            csr=csr_from_dict(d["csr"]),
            spectrum=[BinRecord.from_dict(b) for b in d["spectrum"]],
            peak_frequency=None if d["peak_frequency"] is None else float(d["peak_frequency"]),
            cv=None if d["cv"] is None else cv_from_dict(d["cv"]),
        )


@dataclass(eq=False)
class SubjectReport(_DictEq):
    subject: str
    n_trials: int
    bands: list[BandReport]
    provenance: dict = field(default_factory=dict)
    schema = "ssplsc.subject-report/1"

    def band(self, name: str) -> BandReport:
        for b in self.bands:
            if b.band.name == name:
                return b
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "schema": self.schema,
            "subject": self.subject,
            "n_trials": self.n_trials,
            "provenance": self.provenance,
            "bands": [b.to_dict() for b in self.bands],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SubjectReport":
        return cls(
            subject=d["subject"],
            n_trials=int(d["n_trials"]),
            bands=[BandReport.from_dict(b) for b in d["bands"]],
            provenance=d.get("provenance", {}),
        )


@dataclass(eq=False)
class GroupSummary(_DictEq):
    solver: str
    bands: list[dict]
    failed: list[dict]
    provenance: dict = field(default_factory=dict)
    schema = "ssplsc.group-summary/1"

    def to_dict(self) -> dict:
        return {
            "schema": self.schema,
            "solver": self.solver,
            "provenance": self.provenance,
            "bands": self.bands,
            "failed": self.failed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GroupSummary":
        return cls(d["solver"], d["bands"], d["failed"], d.get("provenance", {}))

    def band(self, name: str) -> dict:
        for b in self.bands:
            if b["band"]["name"] == name:
                return b
        raise KeyError(name)


def _method(cfg: RunConfig, params: RegParams) -> Method:
    return Method(cfg.solver, params, cfg.solver_config, cacoh_pca=cfg.cacoh_pca)


def analyze_subject(
    eeg: Recording,
    emg: Recording,
    cfg: RunConfig = RunConfig(),
    subject: str = "sub-01",
    subject_index: int = 0,
) -> SubjectReport:
    """Full single-subject analysis for every configured band.

    Permutation and fold seeds derive from ``(cfg.seed, subject_index,
    band index)`` only, so different solvers see identical shuffles.
    """
    if cfg.n_trials is not None:
        eeg, emg = eeg.head(cfg.n_trials), emg.head(cfg.n_trials)
    spt = eeg.samples_per_trial
    freqs = band_frequencies([(b.lo, b.hi) for b in cfg.bands], spt, eeg.sampling_rate)
    ds = prepare_spectra(eeg, emg, freqs, cfg.window, cfg.zscore, cfg.normalize)
    reports = []
    for bi, band in enumerate(cfg.bands):
        lap = ds.laplacians(band.lo, band.hi, cfg.connectivity)
        cv = None
        if cfg.solver in TUNABLE and cfg.params == "auto":
            cv = cross_validate_params(
                ds, band, lap, cfg.grid, derive_seed(cfg.seed, subject_index, bi, 1), _method(cfg, RegParams())
            )
            params = cv.chosen
        elif isinstance(cfg.params, RegParams):
            params = cfg.params
        else:
            params = RegParams()
        method = _method(cfg, params)
        csr = permutation_csr(
            ds, band, method, lap, cfg.n_permutations, derive_seed(cfg.seed, subject_index, bi, 0)
        )
        spectrum = [
            BinRecord(f.frequency, f.coherence, f.phi, f.alpha, f.beta, f.objective_trace, f.error)
            for f in csr.real_fits
        ]
        good = [b for b in spectrum if b.error is None]
        peak = max(good, key=lambda b: b.coherence).frequency if good else None
        reports.append(BandReport(band, cfg.solver, method.effective_params, csr, spectrum, peak, cv))
    return SubjectReport(subject, ds.n, reports, cfg.provenance())


def summarize(reports: list[SubjectReport], cfg: RunConfig, failed: list[dict] | None = None) -> GroupSummary:
    """Group mean and std of CSR per band plus the sign-aligned mean pattern."""
    bands = []
    for band in cfg.bands:
        vals = [r.band(band.name).csr.csr for r in reports]
        patterns = [r.band(band.name).peak.alpha for r in reports if r.band(band.name).peak is not None]
        entry = {
            "band": band_to_dict(band),
            "n_subjects": len(vals),
            "csr_mean": _f(np.mean(vals)) if vals else None,
            "csr_std": _f(np.std(vals, ddof=1)) if len(vals) > 1 else None,
            "csr": [_f(v) for v in vals],
            "subjects": [r.subject for r in reports],
            "pattern": None,
            "pattern_converged": None,
        }
        if len(patterns) >= 2:
            avg = align_and_average_patterns(patterns)
            entry["pattern"] = _arr(avg.average)
            entry["pattern_converged"] = avg.converged
        elif len(patterns) == 1:
            entry["pattern"] = _arr(patterns[0])
            entry["pattern_converged"] = True
        bands.append(entry)
    return GroupSummary(cfg.solver, bands, failed or [], cfg.provenance())


def run_subject_safely(eeg, emg, cfg, subject, index):
    """``analyze_subject`` that reports failure instead of raising."""
    try:
        return analyze_subject(eeg, emg, cfg, subject, index), None
    except SSPLSCError as exc:
        return None, {"subject": subject, "error": exc.code, "message": str(exc)}


def with_solver(cfg: RunConfig, solver: str) -> RunConfig:
    return replace(cfg, solver=solver)
