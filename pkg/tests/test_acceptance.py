"""Acceptance suite: one test per project-level criterion.

Each test prints a single ``CRITERION k: PASS|FAIL ...`` line (shown even
without ``-s``) and then asserts. Run with::

    pytest tests/test_acceptance.py -v

Set ``SSPLSC_JOBS`` to parallelise the simulation sweep.
"""

import math
import time

import numpy as np
import pytest

from conftest import random_complex
from ssplsc import cli
from ssplsc.baselines import solve_plsc
from ssplsc.evaluation import Band, Method, cross_validate_params, permutation_csr
from ssplsc.io import read_dataset, write_dataset
from ssplsc.optim import (
    SolverState,
    objective,
    solve_ssplsc,
    spectral_start,
    sub_objective_alpha,
    sub_objective_beta,
    update_alpha,
    update_beta,
    update_phase,
    weighted_identity,
)
from ssplsc.pipeline import (
    BandReport,
    BinRecord,
    GroupSummary,
    RunConfig,
    SubjectReport,
    analyze_subject,
    csr_from_dict,
    csr_to_dict,
    cv_from_dict,
    cv_to_dict,
    summarize,
)
from ssplsc.simgen import GroundTruth, SimConfig, generate, generate_subject
from ssplsc.spectra import SpectralSample, band_frequencies, laplacian, prepare_spectra

BETA = Band("beta", 15.0, 30.0)


@pytest.fixture
def report(capsys):
    def emit(k, ok, detail):
        with capsys.disabled():
            print(f"\nCRITERION {k}: {'PASS' if ok else 'FAIL'} {detail}")
        assert ok, detail

    return emit


def _wrap(d):
    return abs((d + math.pi) % (2 * math.pi) - math.pi)


def test_criterion_1_phase_oracle(report):
    rng = np.random.default_rng(1)
    grid = np.arange(0, 2 * math.pi, 1e-4)
    cos, sin = np.cos(grid), np.sin(grid)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(1000):
        p, q = rng.integers(1, 9, size=2)
        s = random_complex(rng, p, q)
        a, b = rng.standard_normal(p), rng.standard_normal(q)
        phi = update_phase(a, b, s)
        ca, cb = a @ s.real @ b, a @ s.imag @ b
        ref = grid[np.argmax(ca * cos + cb * sin)]
        worst = max(worst, _wrap(phi - ref))
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-3 and elapsed < 10
    report(1, ok, f"max |dphi| = {worst:.2e} rad (< 1e-3), {elapsed:.1f} s (< 10 s)")


def _svd_oracle(s):
    best = 0.0
    for phi in np.arange(0, math.pi, 1e-3):
        best = max(best, np.linalg.norm(s.real * math.cos(phi) + s.imag * math.sin(phi), 2))
    return best


def test_criterion_2_unpenalised_oracle(report):
    rng = np.random.default_rng(2)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        p, q = rng.integers(1, 9, size=2)
        n = int(rng.integers(2, 33))
        x = SpectralSample(random_complex(rng, n, p), 10.0)
        y = SpectralSample(random_complex(rng, n, q), 10.0)
        sol = solve_plsc(x, y)
        s = x.coefficients.conj().T @ y.coefficients
        ref = _svd_oracle(s)
        worst = max(worst, abs(sol.coupling - ref) / ref)
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-4 and elapsed < 60
    report(2, ok, f"max relative gap = {worst:.2e} (< 1e-4), {elapsed:.1f} s (< 60 s)")


def _replay_descent(s_xy, laps, params, max_iter=50):
    """Re-run the alternating updates step by step and record the worst increase."""
    lx, ly = laps
    alpha, beta, phi = spectral_start(s_xy)
    A, B = weighted_identity(lx, params.gamma1), weighted_identity(ly, params.gamma2)
    alpha = alpha / math.sqrt(alpha @ A @ alpha)
    beta = beta / math.sqrt(beta @ B @ beta)
    x, y = SpectralSample(np.eye(s_xy.shape[0]), 1.0), SpectralSample(s_xy, 1.0)
    worst = -np.inf
    for _ in range(max_iter):
        before = sub_objective_alpha(alpha, beta, phi, s_xy, lx, params.lambda1, params.gamma1)
        raw = update_alpha(SolverState(alpha, beta, phi), x, y, lx, params, normalize=False)
        after = sub_objective_alpha(raw, beta, phi, s_xy, lx, params.lambda1, params.gamma1)
        worst = max(worst, after - before)
        alpha = update_alpha(SolverState(alpha, beta, phi), x, y, lx, params)
        before = sub_objective_beta(alpha, beta, phi, s_xy, ly, params.lambda2, params.gamma2)
        raw = update_beta(SolverState(alpha, beta, phi), x, y, ly, params, normalize=False)
        after = sub_objective_beta(alpha, raw, phi, s_xy, ly, params.lambda2, params.gamma2)
        worst = max(worst, after - before)
        beta = update_beta(SolverState(alpha, beta, phi), x, y, ly, params)
        phi = update_phase(alpha, beta, s_xy, phi)
    return worst


def _cv_bin(seed):
    s = generate_subject(SimConfig(n_subjects=1, snr_eeg=0.1, seed=seed), 0)
    ds = prepare_spectra(s.eeg, s.emg, band_frequencies([(15, 30)], 200, 200.0))
    laps = ds.laplacians(15, 30)
    cv = cross_validate_params(ds, BETA, laps, seed=seed)
    k = int(ds.band_indices(s.ground_truth.coupling_frequency, 30)[0])
    return s, ds, laps, cv.chosen, k


@pytest.fixture(scope="module")
def tuned_bins():
    return [_cv_bin(seed) for seed in range(20)]


def test_criterion_3_descent_and_stabilisation(report, tuned_bins):
    worst, iters = -np.inf, []
    for _, ds, laps, params, k in tuned_bins:
        x, y = ds.sample(k)
        s_xy = x.coefficients.conj().T @ y.coefficients
        worst = max(worst, _replay_descent(s_xy, laps, params))
        sol = solve_ssplsc(x, y, laps, params)
        iters.append(sol.iterations_used if sol.converged else math.inf)
    frac = np.mean(np.array(iters) <= 50)
    ok = worst <= 1e-10 and frac >= 0.95
    report(
        3, ok,
        f"worst sub-objective increase = {worst:.1e} (<= 1e-10); "
        f"converged within 50 iterations on {frac:.0%} of 20 seeds (>= 95%), max {max(iters)}",
    )


def test_criterion_4_laplacian_identity(report):
    rng = np.random.default_rng(4)
    worst_q = worst_row = 0.0
    min_eig = np.inf
    for _ in range(1000):
        m = int(rng.integers(1, 21))
        c = rng.uniform(0, 1, (m, m)) * (rng.uniform(size=(m, m)) < rng.uniform(0.1, 1))
        c = np.triu(c, 1)
        c = c + c.T
        lap = laplacian(c).laplacian
        u = rng.standard_normal(m)
        direct = 0.5 * np.sum(c * (u[:, None] - u[None, :]) ** 2)
        worst_q = max(worst_q, abs(u @ lap @ u - direct))
        worst_row = max(worst_row, np.abs(lap.sum(axis=1)).max())
        min_eig = min(min_eig, np.linalg.eigvalsh(lap).min())
    ok = worst_q <= 1e-10 and worst_row < 1e-10 and min_eig >= -1e-10
    report(4, ok, f"quadratic gap {worst_q:.1e}, row sums {worst_row:.1e}, min eigenvalue {min_eig:.1e}")


def test_criterion_5_support_recovery(report, tuned_bins):
    shares = []
    for s, ds, laps, params, _ in tuned_bins[:10]:
        rep = analyze_subject(
            s.eeg, s.emg,
            RunConfig(bands=(BETA,), params=params, n_permutations=1), s.subject_id, 0,
        )
        alpha = np.abs(rep.band("beta").peak.alpha)
        shares.append(alpha[s.ground_truth.eeg_active].sum() / alpha.sum())
    mean = float(np.mean(shares))
    report(5, mean >= 0.8, f"mean l1 share on active EEG channels = {mean:.3f} (>= 0.8); per seed {np.round(shares, 2).tolist()}")


def _pooled_se(a, b):
    a, b = np.asarray(a), np.asarray(b)
    sp2 = ((len(a) - 1) * a.var(ddof=1) + (len(b) - 1) * b.var(ddof=1)) / (len(a) + len(b) - 2)
    return math.sqrt(sp2 * (1 / len(a) + 1 / len(b)))


@pytest.mark.slow
def test_criterion_6_simulation_trends(report):
    cfg = {"analysis": {"n_permutations": 100, "bands": {"beta": [15, 30]}}}
    tasks = cli.sweep_tasks(cfg)
    t0 = time.perf_counter()
    rows = [r for cell in cli._map(cli.sweep_cell, tasks, cli.resolve_jobs(None)) for r in cell]
    elapsed = time.perf_counter() - t0
    assert all(r["status"] == "ok" for r in rows), [r for r in rows if r["status"] != "ok"]

    def csr(snr, n, method):
        return [r["csr"] for r in rows if r["snr"] == snr and r["n"] == n and r["method"] == method]

    means = {(s, n, m): np.mean(csr(s, n, m)) for s in (1.0, 0.1, 0.01) for n in (25, 100) for m in ("ssplsc", "plsc", "cacoh")}
    table = "; ".join(
        f"snr {s} n {n}: " + "/".join(f"{means[s, n, m]:.3f}" for m in ("ssplsc", "plsc", "cacoh"))
        for s in (1.0, 0.1, 0.01) for n in (25, 100)
    )
    a_ok = all(means[0.01, n, "ssplsc"] > max(means[0.01, n, "plsc"], means[0.01, n, "cacoh"]) for n in (25, 100))
    b_bad = []
    for s in (1.0, 0.1, 0.01):
        lo, hi = csr(s, 25, "ssplsc"), csr(s, 100, "ssplsc")
        if np.mean(hi) < np.mean(lo) - _pooled_se(lo, hi):
            b_bad.append(f"n at snr {s}")
    for n in (25, 100):
        for s_lo, s_hi in ((0.01, 0.1), (0.1, 1.0)):
            lo, hi = csr(s_lo, n, "ssplsc"), csr(s_hi, n, "ssplsc")
            if np.mean(hi) < np.mean(lo) - _pooled_se(lo, hi):
                b_bad.append(f"snr {s_lo}->{s_hi} at n {n}")
    ok = a_ok and not b_bad
    report(
        6, ok,
        f"(a) {'ok' if a_ok else 'violated'}; (b) {'ok' if not b_bad else 'violated: ' + ', '.join(b_bad)}; "
        f"mean CSR ssplsc/plsc/cacoh: {table}; runtime {elapsed / 60:.1f} min (target < 30)",
    )


@pytest.mark.slow
def test_criterion_7_null_calibration(report):
    vals = []
    for seed in range(50):
        rng = np.random.default_rng([7, seed])
        from ssplsc.spectra import Recording

        eeg = Recording(rng.standard_normal((50 * 200, 32)), 200.0, 1.0)
        emg = Recording(rng.standard_normal((50 * 200, 10)), 200.0, 1.0)
        ds = prepare_spectra(eeg, emg, band_frequencies([(15, 30)], 200, 200.0))
        vals.append(permutation_csr(ds, BETA, Method(), n_permutations=100, seed=seed).csr)
    mean = float(np.mean(vals))
    report(7, abs(mean) <= 0.1, f"null CSR mean = {mean:.3f} (|mean| <= 0.1), sd {np.std(vals):.3f}")


def test_criterion_8_determinism_and_round_trip(report, tmp_path):
    problems = []
    sim = SimConfig(n_subjects=2, eeg_channels=8, emg_channels=4, trials_per_subject=30, seed=8)
    a, b = generate(sim), generate(sim)
    for sa, sb in zip(a.subjects, b.subjects):
        if not (np.array_equal(sa.eeg.samples, sb.eeg.samples) and np.array_equal(sa.emg.samples, sb.emg.samples)):
            problems.append("dataset")
    s = a.subjects[0]
    ds = prepare_spectra(s.eeg, s.emg, band_frequencies([(15, 30)], 200, 200.0))
    x, y = ds.sample(5)
    laps = ds.laplacians(15, 30)
    from ssplsc.optim import RegParams

    if solve_ssplsc(x, y, laps, RegParams(0.01, 0.01, 1, 1)) != solve_ssplsc(x, y, laps, RegParams(0.01, 0.01, 1, 1)):
        problems.append("solution")
    run = RunConfig.from_dict({"n_permutations": 10, "grid": [0.01, 0.1]})
    reps = [analyze_subject(t.eeg, t.emg, run, t.subject_id, i) for i, t in enumerate(a.subjects)]
    again = [analyze_subject(t.eeg, t.emg, run, t.subject_id, i) for i, t in enumerate(b.subjects)]
    from ssplsc.io import dumps_json

    if [dumps_json(r.to_dict()) for r in reps] != [dumps_json(r.to_dict()) for r in again]:
        problems.append("report")
    summary = summarize(reps, run)
    band = reps[0].bands[0]
    checks = {
        "SubjectReport": (reps[0], SubjectReport),
        "GroupSummary": (summary, GroupSummary),
        "BandReport": (band, BandReport),
        "BinRecord": (band.spectrum[0], BinRecord),
        "RunConfig": (run, RunConfig),
        "SimConfig": (sim, SimConfig),
        "GroundTruth": (s.ground_truth, GroundTruth),
    }
    import json

    for name, (obj, cls) in checks.items():
        d = json.loads(dumps_json(obj.to_dict()))
        if cls.from_dict(d).to_dict() != obj.to_dict() or dumps_json(cls.from_dict(d).to_dict()) != dumps_json(obj.to_dict()):
            problems.append(name)
    for name, dump, load, obj in [
        ("CSRReport", csr_to_dict, csr_from_dict, band.csr),
        ("CVResult", cv_to_dict, cv_from_dict, band.cv),
    ]:
        d = json.loads(dumps_json(dump(obj)))
        if dump(load(d)) != dump(obj):
            problems.append(name)
    write_dataset(tmp_path, a)
    back = read_dataset(tmp_path)
    for sa, sb in zip(a.subjects, back.subjects):
        if not np.array_equal(sa.eeg.samples, sb.eeg.samples):
            problems.append("dataset files")
    ok = not problems
    report(8, ok, "bitwise determinism and lossless round-trips" + ("" if ok else f"; failed: {problems}"))
