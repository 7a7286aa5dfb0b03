"""Command-line interface.

Every subcommand reads one optional JSON config file with up to three
sections, all keys defaulted::

    {"simulation": {...}, "analysis": {...}, "sweep": {"snr": [...], "n": [...], "methods": [...]}}

A report JSON (anything with a ``provenance`` block) is also accepted as a
config, which reruns the analysis that produced it. Errors are printed to
stderr as one JSON object ``{"error": CODE, "message": ...}`` and the
process exits nonzero.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .evaluation import cross_validate_params
from .exceptions import ConfigError, SSPLSCError
from .io import SweepWriter, read_json, read_recordings, write_dataset, write_json
from .optim import RegParams
from .pipeline import (
    RunConfig,
    cv_to_dict,
    derive_seed,
    make_provenance,
    run_subject_safely,
    summarize,
    _method,
)
from .simgen import SimConfig, generate, generate_subject
from .spectra import band_frequencies, prepare_spectra

JOBS_ENV = "SSPLSC_JOBS"
DEFAULT_DATA = "ssplsc-data"
DEFAULT_RESULTS = "ssplsc-results"
SECTIONS = ("simulation", "analysis", "sweep")
DEFAULT_SWEEP = {"snr": [1.0, 0.1, 0.01], "n": [25, 100], "methods": ["ssplsc", "plsc", "cacoh"]}
ABLATION = ("plsc", "splsc", "ssplsc")


def load_config(path) -> dict:
    if path is None:
        return {}
    raw = read_json(path)
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    if "provenance" in raw:
        raw = raw["provenance"].get("config", {})
    unknown = set(raw) - set(SECTIONS)
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    return raw


def resolve_jobs(value) -> int:
    if value is None:
        value = os.environ.get(JOBS_ENV, "1")
    try:
        jobs = int(value)
    except ValueError as exc:
        raise ConfigError(f"invalid job count {value!r}") from exc
    if jobs < 1:
        raise ConfigError("job count must be >= 1")
    return jobs


def _sim_config(cfg: dict, args) -> SimConfig:
    d = dict(cfg.get("simulation", {}))
    if args.seed is not None:
        d["seed"] = args.seed
    return SimConfig.from_dict(d)


def _run_config(cfg: dict, args, **overrides) -> RunConfig:
    d = dict(cfg.get("analysis", {}))
    if args.seed is not None:
        d["seed"] = args.seed
    if getattr(args, "solver", None):
        d["solver"] = args.solver
    d.update(overrides)
    return RunConfig.from_dict(d)


def _map(fn, tasks, jobs):
    if jobs == 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, tasks))


def _input_subjects(args):
    path = Path(args.input)
    if not path.is_dir():
        raise ConfigError(f"input directory {path} does not exist")
    return read_recordings(path)


def _analyze_task(task):
    (sid, eeg, emg), cfg, index = task
    return run_subject_safely(eeg, emg, cfg, sid, index)


def _analyze_all(subjects, cfg, jobs):
    tasks = [(s, cfg, i) for i, s in enumerate(subjects)]
    results = _map(_analyze_task, tasks, jobs)
    reports = [r for r, _ in results if r is not None]
    failed = [f for _, f in results if f is not None]
    return reports, failed


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    sim = _sim_config(cfg, args)
    out = Path(args.out or DEFAULT_DATA)
    write_dataset(out, generate(sim), make_provenance({"simulation": sim.to_dict()}, sim.seed))
    print(json.dumps({"out": str(out), "subjects": sim.n_subjects}))
    return 0


def cmd_analyze(args) -> int:
    cfg = load_config(args.config)
    run = _run_config(cfg, args)
    subjects = _input_subjects(args)
    out = Path(args.out or DEFAULT_RESULTS)
    reports, failed = _analyze_all(subjects, run, resolve_jobs(args.jobs))
    for r in reports:
        write_json(out / "subjects" / f"{r.subject}.json", r.to_dict())
    summary = summarize(reports, run, failed)
    write_json(out / "summary.json", summary.to_dict())
    print(json.dumps({"out": str(out), "analyzed": len(reports), "failed": len(failed)}))
    return 0 if reports else 1


def _tune_task(task):
    (sid, eeg, emg), run, index = task
    try:
        if run.n_trials is not None:
            eeg, emg = eeg.head(run.n_trials), emg.head(run.n_trials)
        freqs = band_frequencies([(b.lo, b.hi) for b in run.bands], eeg.samples_per_trial, eeg.sampling_rate)
        ds = prepare_spectra(eeg, emg, freqs, run.window, run.zscore, run.normalize)
        bands = []
        for bi, band in enumerate(run.bands):
            cv = cross_validate_params(
                ds, band, ds.laplacians(band.lo, band.hi, run.connectivity), run.grid,
                derive_seed(run.seed, index, bi, 1), _method(run, RegParams()),
            )
            bands.append({"band": band.name, "cv": cv_to_dict(cv)})
        return {"subject": sid, "bands": bands}, None
    except SSPLSCError as exc:
        return None, {"subject": sid, "error": exc.code, "message": str(exc)}


def cmd_tune(args) -> int:
    cfg = load_config(args.config)
    run = _run_config(cfg, args)
    if run.solver not in ("splsc", "ssplsc"):
        raise ConfigError(f"solver {run.solver!r} has no tunable parameters")
    subjects = _input_subjects(args)
    tasks = [(s, run, i) for i, s in enumerate(subjects)]
    results = _map(_tune_task, tasks, resolve_jobs(args.jobs))
    out = Path(args.out or DEFAULT_RESULTS)
    write_json(
        out / "tune.json",
        {
            "provenance": run.provenance(),
            "subjects": [r for r, _ in results if r is not None],
            "failed": [f for _, f in results if f is not None],
        },
    )
    print(json.dumps({"out": str(out / "tune.json")}))
    return 0 if any(r is not None for r, _ in results) else 1


def cmd_permtest(args) -> int:
    cfg = load_config(args.config)
    over = {} if args.n_permutations is None else {"n_permutations": args.n_permutations}
    run = _run_config(cfg, args, **over)
    subjects = _input_subjects(args)
    reports, failed = _analyze_all(subjects, run, resolve_jobs(args.jobs))
    out = Path(args.out or DEFAULT_RESULTS)
    rows = [
        {"subject": r.subject, "bands": [dict(b.to_dict()["csr"], params=b.params.as_dict()) for b in r.bands]}
        for r in reports
    ]
    write_json(out / "permtest.json", {"provenance": run.provenance(), "subjects": rows, "failed": failed})
    print(json.dumps({"out": str(out / "permtest.json")}))
    return 0 if reports else 1


def cmd_ablate(args) -> int:
    cfg = load_config(args.config)
    run = _run_config(cfg, args)
    subjects = _input_subjects(args)
    jobs = resolve_jobs(args.jobs)
    out = Path(args.out or DEFAULT_RESULTS)
    table = []
    by_solver = {}
    for solver in ABLATION:
        reports, failed = _analyze_all(subjects, replace(run, solver=solver), jobs)
        by_solver[solver] = summarize(reports, replace(run, solver=solver), failed)
    for band in run.bands:
        row = {"band": band.name}
        for solver in ABLATION:
            b = by_solver[solver].band(band.name)
            row[solver] = {"csr_mean": b["csr_mean"], "csr_std": b["csr_std"], "csr": b["csr"]}
        table.append(row)
    write_json(
        out / "ablation.json",
        {
            "provenance": run.provenance(),
            "table": table,
            "failed": {s: by_solver[s].failed for s in ABLATION},
        },
    )
    print(json.dumps({"out": str(out / "ablation.json")}))
    return 0


def _sweep_config(cfg: dict) -> dict:
    d = dict(DEFAULT_SWEEP)
    extra = set(cfg.get("sweep", {})) - set(d)
    if extra:
        raise ConfigError(f"unknown sweep keys: {sorted(extra)}")
    d.update(cfg.get("sweep", {}))
    if not d["snr"] or not d["n"] or not d["methods"]:
        raise ConfigError("sweep axes must be nonempty")
    for m in d["methods"]:
        if m not in ("plsc", "splsc", "ssplsc", "cacoh"):
            raise ConfigError(f"unknown sweep method {m!r}")
    d["snr"] = [float(s) for s in d["snr"]]
    d["n"] = sorted(int(n) for n in d["n"])
    return d


def sweep_cell(task) -> list[dict]:
    """All rows for one (snr, subject) cell across trial counts and methods."""
    sim, run, snr, ns, methods, index = task
    subject = generate_subject(sim, index)
    rows = []
    for n in ns:
        eeg, emg = subject.eeg.head(n), subject.emg.head(n)
        for method in methods:
            report, failure = run_subject_safely(eeg, emg, replace(run, solver=method), subject.subject_id, index)
            for band in run.bands:
                row = {"snr": snr, "n": n, "subject": subject.subject_id, "method": method, "band": band.name}
                if report is None:
                    rows.append(dict(row, csr=float("nan"), coherence=float("nan"), status=failure["error"]))
                    continue
                csr = report.band(band.name).csr
                k = int(np.argmin(np.abs(csr.frequencies - csr.peak_frequency)))
                rows.append(dict(row, csr=csr.csr, coherence=float(csr.real_coherence[k]), status="ok"))
    return rows


def sweep_tasks(cfg: dict, args=None):
    args = args or argparse.Namespace(seed=None, solver=None)
    sweep = _sweep_config(cfg)
    base = _sim_config(cfg, args)
    base = replace(base, trials_per_subject=max(sweep["n"]))
    run = _run_config(cfg, args)
    tasks = []
    for snr in sweep["snr"]:
        sim = replace(base, snr_eeg=snr)
        for i in range(sim.n_subjects):
            tasks.append((sim, run, snr, sweep["n"], sweep["methods"], i))
    return tasks


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    tasks = sweep_tasks(cfg, args)
    out = Path(args.out or DEFAULT_RESULTS)
    writer = SweepWriter(out / "sweep.csv")
    jobs = resolve_jobs(args.jobs)
    try:
        if jobs == 1:
            for t in tasks:
                for row in sweep_cell(t):
                    writer.write(row)
        else:
            with ProcessPoolExecutor(max_workers=jobs) as ex:
                for rows in ex.map(sweep_cell, tasks):
                    for row in rows:
                        writer.write(row)
    except BaseException:
        writer.abort()
        raise
    writer.close()
    run = tasks[0][1]
    full = {
        "simulation": _sim_config(cfg, args).to_dict(),
        "analysis": run.to_dict(),
        "sweep": _sweep_config(cfg),
    }
    write_json(out / "sweep.json", make_provenance(full, run.seed))
    print(json.dumps({"out": str(out / "sweep.csv")}))
    return 0


class _Parser(argparse.ArgumentParser):
    # usage errors use the same machine-readable stderr line as runtime errors
    def error(self, message):
        self.exit(2, json.dumps({"error": "USAGE", "message": f"{self.prog}: {message}"}) + "\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ssplsc", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, fn, help, inputs=True, solver=True):
        p = sub.add_parser(name, help=help)
        p.add_argument("--config", help="JSON config file (or a previous report)")
        p.add_argument("--seed", type=int, help="override the configured seed")
        p.add_argument("--out", help="output directory")
        p.add_argument("--jobs", help=f"worker processes (default ${JOBS_ENV} or 1)")
        if solver:
            p.add_argument("--solver", choices=("plsc", "splsc", "ssplsc", "cacoh"))
        if inputs:
            p.add_argument("--input", default=DEFAULT_DATA, help="dataset directory")
        p.set_defaults(func=fn)
        return p

    add("simulate", cmd_simulate, "write a synthetic dataset", inputs=False, solver=False)
    add("analyze", cmd_analyze, "per-subject reports and a group summary")
    add("tune", cmd_tune, "cross-validated parameter selection only")
    p = add("permtest", cmd_permtest, "permutation significance (CSR) per band")
    p.add_argument("--n-permutations", type=int)
    add("ablate", cmd_ablate, "PLSC / sPLSC / ssPLSC on identical data", solver=False)
    add("sweep", cmd_sweep, "simulate and score an snr x n grid", inputs=False, solver=False)
    return parser


def _fail(code: str, message: str, status: int) -> int:
    print(json.dumps({"error": code, "message": message}), file=sys.stderr)
    return status


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SSPLSCError as exc:
        return _fail(exc.code, str(exc), exc.exit_status)
    except (ValueError, TypeError) as exc:
        return _fail(ConfigError.code, str(exc), 2)
    except OSError as exc:
        return _fail("IO_ERROR", str(exc), 3)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
