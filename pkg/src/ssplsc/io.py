"""On-disk formats: recording directories, JSON reports and the sweep CSV.

Dataset layout::

    <root>/
        simulation.json      # generator config (simulated datasets only)
        ground_truth.json    # {subject_id: ground truth} (simulated only)
        sub-01/
            eeg.csv          # header = channel labels, rows = samples
            emg.csv
            meta.json        # subject_id, sampling_rate, trial_length

CSV values are written with 17 significant digits so every double
round-trips exactly. All files are written to a temporary sibling and
renamed into place.
"""

from __future__ import annotations

import csv
import io as _io
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .exceptions import DatasetError
from .simgen import GroundTruth, SimConfig, Subject, SyntheticDataset
from .spectra import Recording

SWEEP_HEADER = ("snr", "n", "subject", "method", "band", "csr", "coherence", "status")


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dumps_json(obj) -> str:
    # allow_nan=False: reports encode missing values as null
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(path, obj) -> None:
    atomic_write_text(path, dumps_json(obj))


def read_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise DatasetError(f"missing file {path}") from exc
    except json.JSONDecodeError as exc:
        raise DatasetError(f"{path} is not valid JSON: {exc}") from exc


def recording_to_csv(rec: Recording) -> str:
    buf = _io.StringIO()
    csv.writer(buf, lineterminator="\n").writerow(rec.channel_labels)
    np.savetxt(buf, rec.samples, fmt="%.17g", delimiter=",")
    return buf.getvalue()


def read_recording_csv(path, sampling_rate: float, trial_length: float) -> Recording:
    path = Path(path)
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            labels = next(csv.reader(fh))
            data = np.loadtxt(fh, delimiter=",", ndmin=2, dtype=float)
    except FileNotFoundError as exc:
        raise DatasetError(f"missing file {path}") from exc
    except (StopIteration, ValueError) as exc:
        raise DatasetError(f"cannot parse {path}: {exc}") from exc
    if data.size == 0:
        data = np.zeros((0, len(labels)))
    if data.shape[1] != len(labels):
        raise DatasetError(f"{path}: {len(labels)} labels but {data.shape[1]} columns")
    return Recording(data, sampling_rate, trial_length, labels)


def write_subject(root, subject_id: str, eeg: Recording, emg: Recording) -> Path:
    d = Path(root) / subject_id
    if eeg.sampling_rate != emg.sampling_rate or eeg.trial_length != emg.trial_length:
        raise DatasetError("EEG and EMG must share sampling rate and trial length")
    atomic_write_text(d / "eeg.csv", recording_to_csv(eeg))
    atomic_write_text(d / "emg.csv", recording_to_csv(emg))
    write_json(
        d / "meta.json",
        {"subject_id": subject_id, "sampling_rate": eeg.sampling_rate, "trial_length": eeg.trial_length},
    )
    return d


def read_subject(path) -> tuple[str, Recording, Recording]:
    d = Path(path)
    meta = read_json(d / "meta.json")
    try:
        fs, tl, sid = float(meta["sampling_rate"]), float(meta["trial_length"]), str(meta["subject_id"])
    except (KeyError, TypeError, ValueError) as exc:
        raise DatasetError(f"{d / 'meta.json'}: {exc}") from exc
    return sid, read_recording_csv(d / "eeg.csv", fs, tl), read_recording_csv(d / "emg.csv", fs, tl)


def subject_dirs(root) -> list[Path]:
    root = Path(root)
    if not root.is_dir():
        raise DatasetError(f"dataset directory {root} does not exist")
    dirs = sorted(p for p in root.iterdir() if p.is_dir() and (p / "meta.json").exists())
    if not dirs:
        raise DatasetError(f"no subject folders (with meta.json) under {root}")
    return dirs


def write_dataset(root, dataset: SyntheticDataset, provenance: dict | None = None) -> Path:
    root = Path(root)
    for s in dataset.subjects:
        write_subject(root, s.subject_id, s.eeg, s.emg)
    write_json(root / "ground_truth.json", {s.subject_id: s.ground_truth.to_dict() for s in dataset.subjects})
    sim = {"config": dataset.config.to_dict()}
    if provenance:
        sim["provenance"] = provenance
    write_json(root / "simulation.json", sim)
    return root


def read_dataset(root) -> SyntheticDataset:
    """Read a simulated dataset written by :func:`write_dataset`."""
    root = Path(root)
    sim = read_json(root / "simulation.json")
    truth = read_json(root / "ground_truth.json")
    config = SimConfig.from_dict(sim["config"])
    subjects = []
    for d in subject_dirs(root):
        sid, eeg, emg = read_subject(d)
        if sid not in truth:
            raise DatasetError(f"no ground truth for {sid}")
        subjects.append(Subject(sid, eeg, emg, GroundTruth.from_dict(truth[sid])))
    return SyntheticDataset(config, subjects)


def read_recordings(root) -> list[tuple[str, Recording, Recording]]:
    """Read every subject folder under ``root`` (simulated or not)."""
    return [read_subject(d) for d in subject_dirs(root)]


class SweepWriter:
    """Incremental sweep CSV: rows go to ``<path>.part``, renamed on close.

    A failed sweep leaves the partial file behind with every finished row.
    """

    def __init__(self, path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.part = self.path.with_name(self.path.name + ".part")
        self._fh = open(self.part, "w", newline="", encoding="utf-8")
        self._w = csv.writer(self._fh, lineterminator="\r\n")
        self._w.writerow(SWEEP_HEADER)
        self._fh.flush()

    def write(self, row: dict) -> None:
        self._w.writerow([_cell(row[k]) for k in SWEEP_HEADER])
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()
        os.replace(self.part, self.path)

    def abort(self) -> None:
        self._fh.close()


def _cell(v):
    if isinstance(v, float):
        return "" if v != v else repr(v)
    return v


def read_sweep(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        r = csv.DictReader(fh)
        if tuple(r.fieldnames or ()) != SWEEP_HEADER:
            raise DatasetError(f"{path}: unexpected header {r.fieldnames}")
        return list(r)
