"""Coherence spectra, permutation significance and parameter selection."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .baselines import SOLVERS, Whitener, canonical_coherence_from_blocks
from .exceptions import (
    DegenerateFold,
    PermutationFailure,
    ShapeMismatch,
    SSPLSCError,
    ZeroLatent,
    ZeroPattern,
)
from .optim import RegParams, SolverConfig, prepare_operators, solve_cross_spectrum
from .spectra import SpectralDataset, SpectralSample

DEFAULT_GRID = (0.01, 0.1, 1.0, 10.0)
MAX_REDRAWS = 10


@dataclass(frozen=True)
class Band:
    name: str
    lo: float
    hi: float

    def __post_init__(self):
        if not (0 <= self.lo < self.hi):
            raise ValueError(f"invalid band {self.name}: [{self.lo}, {self.hi})")


DEFAULT_BANDS = (Band("alpha", 8.0, 15.0), Band("beta", 15.0, 30.0), Band("gamma", 30.0, 45.0))


@dataclass(frozen=True)
class Method:
    """A projection method with its fixed hyperparameters.

    ``params`` is ignored by ``plsc`` and ``cacoh``; ``splsc`` uses only the
    sparsity weights.
    """

    solver: str = "ssplsc"
    params: RegParams = RegParams()
    config: SolverConfig = SolverConfig()
    cacoh_ridge: float = 1e-8
    cacoh_pca: float | None = None

    def __post_init__(self):
        if self.solver not in SOLVERS:
            raise ValueError(f"unknown solver {self.solver!r}; choose from {SOLVERS}")

    @property
    def effective_params(self) -> RegParams:
        if self.solver == "ssplsc":
            return self.params
        if self.solver == "splsc":
            return RegParams(self.params.lambda1, self.params.lambda2, 0.0, 0.0)
        return RegParams()

    def with_params(self, params: RegParams) -> "Method":
        return replace(self, params=params)


@dataclass
class BinFit:
    frequency: float
    coherence: float
    alpha: np.ndarray | None
    beta: np.ndarray | None
    phi: float
    error: str | None = None
    objective_trace: np.ndarray | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass
class CoherenceSpectrum:
    bins: list[BinFit]

    @property
    def frequencies(self) -> np.ndarray:
        return np.array([b.frequency for b in self.bins])

    @property
    def coherence(self) -> np.ndarray:
        return np.array([b.coherence if b.ok else np.nan for b in self.bins])

    def peak(self) -> BinFit:
        """Successful bin with the highest coherence."""
        good = [b for b in self.bins if b.ok]
        if not good:
            raise SSPLSCError("no bin was solved successfully")
        return max(good, key=lambda b: b.coherence)


@dataclass
class CSRReport:
    band: Band
    csr: float
    frequencies: np.ndarray
    real_coherence: np.ndarray
    permuted_mean: np.ndarray
    n_permutations: int
    seed: int
    peak_frequency: float
    redraws: int = 0
    real_fits: list = field(default_factory=list, repr=False, compare=False)


@dataclass
class CVResult:
    chosen: RegParams
    cost_surface: dict
    folds: int = 5
    gamma_surface: dict = field(default_factory=dict)


def latent_coherence(x, y, alpha, beta) -> float:
    """Magnitude coherence ``|u^H v| / (|u| |v|)`` of ``u = X alpha``, ``v = Y beta``."""
    X = x.coefficients if isinstance(x, SpectralSample) else np.asarray(x)
    Y = y.coefficients if isinstance(y, SpectralSample) else np.asarray(y)
    u = X @ np.asarray(alpha, float)
    v = Y @ np.asarray(beta, float)
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu < 1e-12 or nv < 1e-12:
        raise ZeroLatent("latent variable has zero norm")
    return float(abs(np.vdot(u, v)) / (nu * nv))


def _latent_coherence_blocks(s_xx, s_xy, s_yy, alpha, beta) -> float:
    # same quantity as latent_coherence, from cross-spectra
    uu = float(alpha @ (s_xx.real @ alpha))
    vv = float(beta @ (s_yy.real @ beta))
    if uu < 1e-24 or vv < 1e-24:
        raise ZeroLatent("latent variable has zero norm")
    return float(min(abs(alpha @ s_xy @ beta) / math.sqrt(uu * vv), 1.0))


class _BinSolver:
    """Solves one method on a fixed set of bins for many cross-spectra.

    Everything that does not depend on ``S_xy`` (penalty operators, whitening)
    is computed once, which is what makes permutation nulls affordable.
    """

    def __init__(self, method: Method, freqs, s_xx, s_yy, laplacians=None):
        self.method = method
        self.freqs = np.asarray(freqs, float)
        self.s_xx = s_xx
        self.s_yy = s_yy
        p, q = s_xx.shape[1], s_yy.shape[1]
        if method.solver == "cacoh":
            self.whiteners = []
            for sxx, syy in zip(s_xx, s_yy):
                try:
                    self.whiteners.append(
                        (
                            Whitener.from_auto_spectrum(sxx, method.cacoh_ridge, method.cacoh_pca),
                            Whitener.from_auto_spectrum(syy, method.cacoh_ridge, method.cacoh_pca),
                        )
                    )
                except SSPLSCError as exc:
                    self.whiteners.append(exc)
        else:
            lap = laplacians if method.solver == "ssplsc" else None
            self.ops = prepare_operators(lap, method.effective_params, (p, q))

    def fit(self, s_xy) -> list[BinFit]:
        out = []
        for i, f in enumerate(self.freqs):
            try:
                if self.method.solver == "cacoh":
                    w = self.whiteners[i]
                    if isinstance(w, Exception):
                        raise w
                    sol = canonical_coherence_from_blocks(s_xy[i], w[0], w[1])
                    trace = None
                else:
                    sol = solve_cross_spectrum(s_xy[i], config=self.method.config, operators=self.ops)
                    trace = sol.objective_trace
                coh = _latent_coherence_blocks(self.s_xx[i], s_xy[i], self.s_yy[i], sol.alpha, sol.beta)
                out.append(BinFit(float(f), coh, sol.alpha, sol.beta, sol.phi, None, trace))
            except SSPLSCError as exc:
                out.append(BinFit(float(f), np.nan, None, None, np.nan, error=exc.code))
        return out


def coherence_spectrum(
    dataset: SpectralDataset, method: Method = Method(), laplacians=None
) -> CoherenceSpectrum:
    """Fit ``method`` independently at every bin of ``dataset``.

    Bins whose solve fails are kept with their error code instead of
    aborting the spectrum.
    """
    if len(dataset) < 1:
        raise ValueError("dataset has no frequency bins")
    s_xx, s_xy, s_yy = dataset.cross_spectra()
    return CoherenceSpectrum(_BinSolver(method, dataset.freqs, s_xx, s_yy, laplacians).fit(s_xy))


def _cross_xy(x, y):
    return np.einsum("bni,bnj->bij", x.conj(), y)


def permutation_csr(
    dataset: SpectralDataset,
    band: Band,
    method: Method = Method(),
    laplacians=None,
    n_permutations: int = 500,
    seed: int = 0,
    shuffle: str = "y",
) -> CSRReport:
    """Coherence significance ratio of ``method`` within ``band``.

    Trial order of one modality is shuffled (one shuffle shared by all bins
    of a permutation) to build the null; the ratio
    ``(Coh_real - mean Coh_perm) / Coh_real`` is maximised over the band.
    Permutation ``i`` draws from the stream seeded by ``(seed, i, attempt)``.
    """
    if n_permutations < 1:
        raise ValueError("n_permutations must be >= 1")
    if dataset.n < 3:
        raise ShapeMismatch("permutation testing needs at least 3 trials")
    if shuffle not in ("x", "y"):
        raise ValueError("shuffle must be 'x' or 'y'")
    idx = dataset.band_indices(band.lo, band.hi)
    if len(idx) == 0:
        raise ValueError(f"no bins in band {band.name} [{band.lo}, {band.hi})")
    sub = dataset.select_bins(idx)
    s_xx, s_xy, s_yy = sub.cross_spectra()
    solver = _BinSolver(method, sub.freqs, s_xx, s_yy, laplacians)
    real = solver.fit(s_xy)
    valid = np.array([b.ok for b in real])
    if not valid.any():
        raise SSPLSCError(f"every bin of band {band.name} failed on the real data")
    real_coh = np.array([b.coherence for b in real])

    perm_sum = np.zeros(len(idx))
    redraws = 0
    for i in range(n_permutations):
        for attempt in range(MAX_REDRAWS + 1):
            rng = np.random.default_rng([seed, i, attempt])
            order = rng.permutation(dataset.n)
            if shuffle == "y":
                sp = _cross_xy(sub.x, sub.y[:, order])
            else:
                sp = _cross_xy(sub.x[:, order], sub.y)
            fits = solver.fit(sp)
            if all(f.ok for f, v in zip(fits, valid) if v):
                break
            redraws += 1
        else:
            raise PermutationFailure(
                f"permutation {i} failed after {MAX_REDRAWS} redraws in band {band.name}"
            )
        perm_sum += np.array([f.coherence if v else 0.0 for f, v in zip(fits, valid)])
    perm_mean = np.where(valid, perm_sum / n_permutations, np.nan)

    ratio = np.full(len(idx), -np.inf)
    ratio[valid] = (real_coh[valid] - perm_mean[valid]) / real_coh[valid]
    k = int(np.argmax(ratio))
    return CSRReport(
        band=band,
        csr=float(ratio[k]),
        frequencies=sub.freqs.copy(),
        real_coherence=real_coh,
        permuted_mean=perm_mean,
        n_permutations=n_permutations,
        seed=seed,
        peak_frequency=float(sub.freqs[k]),
        redraws=redraws,
        real_fits=real,
    )


def fold_indices(n: int, n_folds: int = 5, seed: int = 0) -> list[np.ndarray]:
    """Seeded shuffle of trial indices cut into contiguous folds."""
    order = np.random.default_rng([seed, 0x5EED]).permutation(n)
    return [np.sort(f) for f in np.array_split(order, n_folds)]


def cv_cost(
    dataset: SpectralDataset,
    band: Band,
    method: Method,
    laplacians=None,
    folds: Sequence[np.ndarray] | None = None,
    seed: int = 0,
) -> float:
    """Mean relative train/test coherence gap over cross-validation folds.

    In each fold, projections are fit on the training trials at every band
    bin; the bin with the highest training coherence is scored. Returns
    ``inf`` if a training fit fails at any band bin: the band-level ratio
    needs a coherence at every bin, so such parameters are unusable.
    """
    sub = dataset.select_bins(dataset.band_indices(band.lo, band.hi))
    if folds is None:
        folds = fold_indices(sub.n, 5, seed)
    all_idx = np.arange(sub.n)
    costs = []
    for test in folds:
        train = np.setdiff1d(all_idx, test)
        tr, te = sub.select_trials(train), sub.select_trials(test)
        s_xx, s_xy, s_yy = tr.cross_spectra()
        fits = _BinSolver(method, tr.freqs, s_xx, s_yy, laplacians).fit(s_xy)
        if not all(f.ok for f in fits):
            return math.inf
        i, best = max(enumerate(fits), key=lambda t: t[1].coherence)
        try:
            coh_test = latent_coherence(te.x[i], te.y[i], best.alpha, best.beta)
        except ZeroLatent:
            return math.inf
        costs.append(abs(coh_test - best.coherence) / best.coherence)
    return float(np.mean(costs))


def _key(params: RegParams) -> tuple:
    return (params.lambda1, params.lambda2, params.gamma1, params.gamma2)


def _argmin(surface: dict, stage: str) -> tuple:
    finite = {k: v for k, v in surface.items() if math.isfinite(v)}
    if not finite:
        raise DegenerateFold(f"every grid point failed in the {stage} stage")
    # first minimum in grid order
    return min(finite, key=lambda k: finite[k])


def cross_validate_params(
    dataset: SpectralDataset,
    band: Band,
    laplacians=None,
    grid: Sequence[float] = DEFAULT_GRID,
    seed: int = 0,
    method: Method = Method(),
    n_folds: int = 5,
) -> CVResult:
    """Stepwise grid search with ``n_folds``-fold cross-validation.

    The structure weights are searched first with the sparsity weights at
    zero, then the sparsity weights with the structure weights fixed. For
    ``splsc`` only the sparsity stage runs.
    """
    if dataset.n < 2 * n_folds:
        raise ShapeMismatch(f"need at least {2 * n_folds} trials for {n_folds}-fold CV")
    folds = fold_indices(dataset.n, n_folds, seed)
    grid = [float(g) for g in grid]

    gamma_surface = {}
    g1 = g2 = 0.0
    if method.solver == "ssplsc":
        for a in grid:
            for b in grid:
                params = RegParams(0.0, 0.0, a, b)
                gamma_surface[_key(params)] = cv_cost(
                    dataset, band, method.with_params(params), laplacians, folds
                )
        _, _, g1, g2 = _argmin(gamma_surface, "structure")
    elif method.solver != "splsc":
        raise ValueError(f"{method.solver} has no tunable parameters")

    surface = {}
    for a in grid:
        for b in grid:
            params = RegParams(a, b, g1, g2)
            surface[_key(params)] = cv_cost(
                dataset, band, method.with_params(params), laplacians, folds
            )
    chosen = RegParams(*_argmin(surface, "sparsity"))
    return CVResult(chosen=chosen, cost_surface=surface, folds=n_folds, gamma_surface=gamma_surface)


@dataclass
class PatternAverage:
    average: np.ndarray
    signs: np.ndarray
    rounds: int
    converged: bool


def _corr(a, b) -> float:
    a = a - a.mean()
    b = b - b.mean()
    den = np.linalg.norm(a) * np.linalg.norm(b)
    return float(a @ b / den) if den > 0 else 0.0


def align_and_average_patterns(patterns, max_rounds: int = 100) -> PatternAverage:
    """Sign-align subject patterns against the others' average, then average.

    A pattern is negated whenever its Pearson correlation with the mean of
    the remaining (aligned) patterns is negative; rounds repeat until no
    pattern flips. The global orientation keeps the majority of inputs
    unflipped.
    """
    P = np.asarray(patterns, dtype=float)
    if P.ndim != 2 or P.shape[0] < 2:
        raise ValueError("need at least two patterns of equal length")
    if np.any(np.linalg.norm(P, axis=1) == 0):
        raise ZeroPattern("pattern with zero norm")
    m = P.shape[0]
    signs = np.ones(m)
    converged = False
    rounds = 0
    for rounds in range(1, max_rounds + 1):
        flipped = False
        for i in range(m):
            total = (signs[:, None] * P).sum(axis=0)
            others = (total - signs[i] * P[i]) / (m - 1)
            if _corr(signs[i] * P[i], others) < 0:
                signs[i] = -signs[i]
                flipped = True
        if not flipped:
            converged = True
            break
    n_flipped = int((signs < 0).sum())
    if 2 * n_flipped > m or (2 * n_flipped == m and signs[0] < 0):
        signs = -signs
    return PatternAverage((signs[:, None] * P).mean(axis=0), signs, rounds, converged)
