"""Ablation variants and a canonical-coherence comparator."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .exceptions import ShapeMismatch, SingularAutoSpectrum
from .optim import (
    ProjectionSolution,
    RegParams,
    SolverConfig,
    real_cross,
    solve_ssplsc,
)
from .spectra import SpectralSample, cross_spectrum


def solve_plsc(x: SpectralSample, y: SpectralSample, config: SolverConfig = SolverConfig()):
    """Unpenalised PLS coherence."""
    return solve_ssplsc(x, y, None, RegParams(), config)


def solve_splsc(
    x: SpectralSample,
    y: SpectralSample,
    lambda1: float,
    lambda2: float,
    config: SolverConfig = SolverConfig(),
) -> ProjectionSolution:
    """PLS coherence with l1 penalties only."""
    return solve_ssplsc(x, y, None, RegParams(lambda1, lambda2, 0.0, 0.0), config)


@dataclass
class CanonicalCoherenceSolution:
    alpha: np.ndarray
    beta: np.ndarray
    phi: float
    coherence: float
    iterations_used: int
    converged: bool


@dataclass
class Whitener:
    """Maps whitened-space weights back to channel weights.

    ``basis`` has shape (channels, retained) and satisfies
    ``basis' (Re S + ridge I) basis = I`` on the retained subspace.
    """

    basis: np.ndarray

    @classmethod
    def from_auto_spectrum(cls, s_auto: np.ndarray, ridge: float = 1e-8, pca_retain: float | None = None):
        m = np.asarray(s_auto).real
        m = 0.5 * (m + m.T)
        dim = m.shape[0]
        evals, evecs = np.linalg.eigh(m)
        evals = evals[::-1]
        evecs = evecs[:, ::-1]
        if pca_retain is not None:
            total = evals.clip(min=0).sum()
            if not total > 0:
                raise SingularAutoSpectrum("auto-spectrum has no positive power")
            keep = int(np.searchsorted(np.cumsum(evals.clip(min=0)) / total, pca_retain) + 1)
            keep = min(keep, dim)
            evals, evecs = evals[:keep], evecs[:, :keep]
        loading = ridge * max(np.trace(m), 0.0) / dim
        loaded = evals + loading
        if not np.all(loaded > 0) or not np.all(np.isfinite(loaded)):
            raise SingularAutoSpectrum("ridge loading did not make the auto-spectrum positive definite")
        return cls(evecs / np.sqrt(loaded))


def _sigma_max(m_re, m_im, phi):
    return np.linalg.norm(m_re * math.cos(phi) + m_im * math.sin(phi), 2)


def _best_phase(m: np.ndarray, n_grid: int = 32) -> float:
    # sigma_max(Re(M e^{-i phi})) is pi-periodic: grid over [0, pi), then Brent
    grid = np.arange(n_grid) * (math.pi / n_grid)
    stack = m.real[None] * np.cos(grid)[:, None, None] + m.imag[None] * np.sin(grid)[:, None, None]
    k = int(np.argmax(np.linalg.svd(stack, compute_uv=False)[:, 0]))
    h = math.pi / n_grid
    res = minimize_scalar(
        lambda phi: -_sigma_max(m.real, m.imag, phi),
        bounds=(grid[k] - h, grid[k] + h),
        method="bounded",
        options={"xatol": 1e-10},
    )
    return float(res.x)


def canonical_coherence_from_blocks(
    s_xy: np.ndarray,
    wx: Whitener,
    wy: Whitener,
    tol: float = 1e-8,
    max_iter: int = 500,
) -> CanonicalCoherenceSolution:
    """Maximise projected coherence by alternating SVD and phase updates.

    The phase is seeded at the maximiser of the leading singular value (a
    fixed point of the alternation), so the alternation mostly certifies
    stationarity.
    """
    m = wx.basis.T @ s_xy @ wy.basis
    phi = _best_phase(m)
    prev = -np.inf
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        u, s, vt = np.linalg.svd(real_cross(m, phi))
        a_w, b_w = u[:, 0], vt[0]
        z = a_w @ m @ b_w
        new_phi = math.atan2(z.imag, z.real) % (2 * math.pi)
        value = abs(z)
        dphi = abs((new_phi - phi + math.pi) % (2 * math.pi) - math.pi)
        phi = new_phi
        if dphi < tol and abs(value - prev) < tol:
            converged = True
            break
        prev = value
    alpha = wx.basis @ a_w
    beta = wy.basis @ b_w
    alpha /= np.linalg.norm(alpha)
    beta /= np.linalg.norm(beta)
    return CanonicalCoherenceSolution(alpha, beta, phi, float(min(value, 1.0)), it, converged)


def solve_cacoh(
    x: SpectralSample,
    y: SpectralSample,
    ridge: float = 1e-8,
    pca_retain: float | None = None,
    tol: float = 1e-8,
) -> CanonicalCoherenceSolution:
    """Canonical coherence between real projections of two modalities.

    A reimplementation from the definition ("caCOH-like"): auto-spectra are
    ridge-loaded by ``ridge * trace / dim`` and, optionally, reduced to the
    principal components holding ``pca_retain`` of the power.
    """
    if x.n != y.n:
        raise ShapeMismatch(f"trial counts differ: {x.n} vs {y.n}")
    block = cross_spectrum(x, y)
    wx = Whitener.from_auto_spectrum(block.s_xx, ridge, pca_retain)
    wy = Whitener.from_auto_spectrum(block.s_yy, ridge, pca_retain)
    return canonical_coherence_from_blocks(block.s_xy, wx, wy, tol)


SOLVERS = ("plsc", "splsc", "ssplsc", "cacoh")
