"""Text formats: curve files, label/matrix CSVs and chain records.

Curve file (tab separated)::

    #fibercurves  version=1  grid=100  npolicy=raw  connection=ra,rb
    subject_id  scan_id  fiber_id  n_points  x1 y1 z1 x2 y2 z2 ...

``npolicy=raw`` curves are resampled to ``grid`` points on load;
``npolicy=uniform`` curves are already on that grid and kept as written.
"""

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import curves

FORMAT_VERSION = 1


def fmt(x):
    """17 significant digits, enough to round-trip a double."""
    return format(float(x), ".17g")


class FormatError(ValueError):
    pass


@dataclass
class FiberRecord:
    subject_id: str
    scan_id: str
    fiber_id: str
    points: np.ndarray

    @property
    def unit(self):
        return f"{self.subject_id}:{self.scan_id}"

    @property
    def key(self):
        return f"{self.subject_id}:{self.scan_id}:{self.fiber_id}"


@dataclass
class FiberDataset:
    fibers: list
    n_points: int = 100
    connection_id: tuple = ("ra", "rb")
    provenance: dict = field(default_factory=dict)

    def units(self):
        """Fibers grouped by (subject, scan), in file order."""
        out = {}
        for f in self.fibers:
            out.setdefault(f.unit, []).append(f)
        return out

    def curves(self):
        return [f.points for f in self.fibers]


def _parse_header(line, path):
    if not line.startswith("#fibercurves"):
        raise FormatError(f"{path}:1: missing '#fibercurves' header")
    opts = dict(tok.split("=", 1) for tok in line.strip().split("\t")[1:] if "=" in tok)
    if int(opts.get("version", FORMAT_VERSION)) != FORMAT_VERSION:
        raise FormatError(f"{path}:1: unsupported format version {opts['version']}")
    return opts


def load_fibers(path, n_points=None, min_fibers=0):
    """Read a curve file, resample to the working grid and validate.

    Units (subject, scan) with fewer than ``min_fibers`` curves are dropped
    when ``min_fibers > 0``.
    """
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise FormatError(f"{path}: empty file")
    opts = _parse_header(lines[0], path)
    grid_n = int(n_points or opts.get("grid", 100))
    policy = opts.get("npolicy", "raw")
    conn = tuple(opts.get("connection", "ra,rb").split(","))
    fibers = []
    seen = set()
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) < 4:
            raise FormatError(f"{path}:{lineno}: expected at least 4 fields")
        sid, scan, fid = parts[:3]
        try:
            npts = int(parts[3])
            vals = np.array([float(v) for v in parts[4:]])
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: fiber {fid}: {exc}") from None
        if vals.size != 3 * npts:
            raise FormatError(f"{path}:{lineno}: fiber {fid}: expected {3 * npts} coordinates, got {vals.size}")
        if npts < 2:
            raise FormatError(f"{path}:{lineno}: fiber {fid} has {npts} point(s); need at least 2")
        if not np.all(np.isfinite(vals)):
            raise FormatError(f"{path}:{lineno}: fiber {fid} has non-finite coordinates")
        key = (sid, scan, fid)
        if key in seen:
            raise FormatError(f"{path}:{lineno}: duplicate fiber {sid}:{scan}:{fid}")
        seen.add(key)
        pts = vals.reshape(npts, 3)
        if policy == "uniform" and npts == grid_n:
            pts = curves.as_curve(pts)
        else:
            try:
                pts = curves.resample(pts, grid_n)
            except curves.CurveError as exc:
                raise FormatError(f"{path}:{lineno}: fiber {fid}: {exc}") from None
        fibers.append(FiberRecord(sid, scan, fid, pts))
    ds = FiberDataset(fibers, grid_n, conn, {"source": str(path), "min_fibers": min_fibers})
    if min_fibers > 0:
        keep = {u for u, fs in ds.units().items() if len(fs) >= min_fibers}
        dropped = sorted(set(ds.units()) - keep)
        ds.fibers = [f for f in fibers if f.unit in keep]
        ds.provenance["dropped_units"] = dropped
    return ds


def save_fibers(dataset, path, policy="uniform"):
    header = ["#fibercurves", f"version={FORMAT_VERSION}", f"grid={dataset.n_points}",
              f"npolicy={policy}", "connection=" + ",".join(dataset.connection_id)]
    rows = ["\t".join(header)]
    for f in dataset.fibers:
        pts = np.asarray(f.points)
        rows.append("\t".join([f.subject_id, f.scan_id, f.fiber_id, str(len(pts))] + [fmt(v) for v in pts.ravel()]))
    with open(path, "w") as fh:
        fh.write("\n".join(rows) + "\n")


def write_labels(path, ids, labels):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "label"])
        for i, lab in zip(ids, labels):
            w.writerow([i, int(lab)])


def read_labels(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][:2] != ["id", "label"]:
        raise FormatError(f"{path}: expected an 'id,label' header")
    return {r[0]: int(r[1]) for r in rows[1:] if r}


def write_matrix(path, ids, mat):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([""] + list(ids))
        for i, row in zip(ids, mat):
            w.writerow([i] + [fmt(v) for v in row])


def read_matrix(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    ids = rows[0][1:]
    return ids, np.array([[float(v) for v in r[1:]] for r in rows[1:]])


def write_table(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in r])


def read_table(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    return obj


def dump_json(path, obj):
    with open(path, "w") as fh:
        json.dump(_clean(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_jsonl(path, records):
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(_clean(rec), sort_keys=True, separators=(",", ":")) + "\n")


def read_jsonl(path):
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]
