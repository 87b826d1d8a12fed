"""CSV and JSON readers/writers and run manifests.

Dataset CSV is long format, one row per observation:
``subject_id,time,y1..yp,x1..xq`` with a mandatory header. Subjects are
grouped by id in order of first appearance; row order within a subject is
kept. Floats are written with 17 significant digits so they round-trip
exactly.
"""

import csv
import datetime as _dt
import hashlib
import json
import math
import os
import subprocess

import numpy as np

from .model import Dataset, Subject
from .special import DomainError


def fmt(x):
    return format(float(x), ".17g")


def write_dataset_csv(path, data):
    header = (["subject_id", "time"] + [f"y{j + 1}" for j in range(data.p)]
              + [f"x{j + 1}" for j in range(data.q)])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for s in data.subjects:
            for r in range(s.n):
                w.writerow([s.id, fmt(s.t[r])] + [fmt(v) for v in s.y[r]] + [fmt(v) for v in s.x[r]])


def _subject_key(raw):
    try:
        as_int = int(raw)
        return as_int if str(as_int) == raw else raw
    except ValueError:
        return raw


def read_dataset_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DomainError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if len(header) < 4 or header[0] != "subject_id" or header[1] != "time":
        raise DomainError(f"{path}: header must start with subject_id,time and list y and x columns")
    ycols = [i for i, h in enumerate(header) if h.startswith("y")]
    xcols = [i for i, h in enumerate(header) if h.startswith("x")]
    if not ycols or not xcols or len(ycols) + len(xcols) + 2 != len(header):
        raise DomainError(f"{path}: columns after time must be y1..yp then x1..xq")
    groups = {}
    for line_no, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        sid = _subject_key(row[0].strip())
        if len(row) != len(header):
            raise DomainError(f"{path}:{line_no}: subject {sid!r} has a row with {len(row)} "
                              f"fields, expected {len(header)}")
        try:
            values = [float(c) for c in row[1:]]
        except ValueError as exc:
            raise DomainError(f"{path}:{line_no}: subject {sid!r}: {exc}") from exc
        if not all(math.isfinite(v) for v in values):
            raise DomainError(f"{path}:{line_no}: subject {sid!r} has a non-finite value")
        groups.setdefault(sid, []).append(values)
    if not groups:
        raise DomainError(f"{path}: no data rows")
    p, q = len(ycols), len(xcols)
    subjects = []
    for sid, vals in groups.items():
        arr = np.array(vals)
        subjects.append(Subject(arr[:, 1:1 + p], arr[:, 1 + p:1 + p + q], arr[:, 0], id=sid))
    return Dataset(subjects, p, q)


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def dump_json(path, obj):
    text = json.dumps(_clean(obj), indent=2, sort_keys=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text + "\n")


def load_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def write_rows_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])


def file_digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def git_describe():
    here = os.path.dirname(os.path.abspath(__file__))
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"], cwd=here,
                             capture_output=True, text=True, timeout=10)
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return out.stdout.strip() if out.returncode == 0 and out.stdout.strip() else "unknown"


def now_iso():
    return _dt.datetime.now(_dt.timezone.utc).isoformat()


def write_manifest(outputs, command, config, seed, started):
    """Write ``<first output>.manifest.json`` describing this run; returns its path."""
    outputs = [o for o in outputs if o]
    if not outputs:
        raise ValueError("a manifest needs at least one output file")
    manifest = {
        "command": command,
        "config": config,
        "seed": seed,
        "git_describe": git_describe(),
        "started": started,
        "finished": now_iso(),
        "outputs": {os.path.basename(p): file_digest(p) for p in outputs},
    }
    path = os.path.splitext(outputs[0])[0] + ".manifest.json"
    dump_json(path, manifest)
    return path
