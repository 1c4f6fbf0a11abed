"""Command-line pipeline: ``fibermix <stage> [options]``.

Stages: ``synth``, ``decompose``, ``fit-single``, ``fit-ndp``, ``eval`` and
``reconstruct``.  Options may also come from a flat ``key = value`` file
passed with ``--config``; command-line flags win.  ``FIBERMIX_OUT`` sets the
output directory when ``--out`` is absent.  Every stage writes into a
staging directory first and only moves its artifacts into place on success,
together with a ``manifest.json`` describing the run.
"""

import argparse
import hashlib
import json
import logging
import os
import platform
import shutil
import sys
import tempfile
from dataclasses import asdict, dataclass, fields
from importlib import metadata

import numpy as np

from . import basis as basis_mod
from . import evaluate, io, synth
from .mixture import COMPONENTS, MixtureConfig, fit_single
from .ndp import NdpConfig, fit_ndp
from .pipeline import preprocess

log = logging.getLogger("fibermix")

STAGES = ("synth", "decompose", "fit-single", "fit-ndp", "eval", "reconstruct")
PRESETS = {"two-bundle": synth.two_bundle_spec, "population": synth.population_spec,
           "test-retest": synth.retest_spec}


class StageError(RuntimeError):
    pass


@dataclass
class RunConfig:
    mode: str
    seed: int = None
    out: str = None
    input: str = None
    truth: str = None
    estimate: str = None
    decomposition: str = None
    basis: str = None
    preset: str = "two-bundle"
    components: tuple = ("shape", "trans", "rot")
    K: int = None
    L: int = 15
    T: int = 3
    iters: int = None
    burnin: int = None
    thin: int = 1
    n_points: int = 100
    min_fibers: int = 30
    joint_counts: bool = False
    template_iter: int = 5
    align_iter: int = 20
    param_stride: int = 0
    unit: str = None

    def validate(self):
        if self.mode not in STAGES:
            raise StageError(f"unknown stage {self.mode!r}")
        if self.mode != "eval" and self.seed is None:
            raise StageError("--seed is required")
        if not self.out:
            raise StageError("no output directory: pass --out or set FIBERMIX_OUT")
        need = {"decompose": ["input"], "fit-single": ["input"], "fit-ndp": ["input"],
                "eval": ["truth", "estimate"], "reconstruct": ["input", "decomposition"]}
        for name in need.get(self.mode, []):
            if getattr(self, name) is None:
                raise StageError(f"{self.mode} requires --{name}")
        bad = set(self.components) - set(COMPONENTS)
        if bad:
            raise StageError(f"unknown components {sorted(bad)}")
        if self.mode == "synth" and self.preset not in PRESETS:
            raise StageError(f"unknown preset {self.preset!r}; choose from {sorted(PRESETS)}")


# ---------------------------------------------------------------- helpers

def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _versions():
    out = {"python": platform.python_version()}
    for pkg in ("fibermix", "numpy", "scipy", "numba"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = "unknown"
    return out


def _write_manifest(stage_dir, config, inputs):
    outputs = {name: _sha256(os.path.join(stage_dir, name)) for name in sorted(os.listdir(stage_dir))}
    cfg = asdict(config)
    cfg.pop("out")
    io.dump_json(os.path.join(stage_dir, "manifest.json"), {
        "stage": config.mode, "seed": config.seed, "config": cfg, "versions": _versions(),
        "inputs": {p: _sha256(p) for p in inputs if p and os.path.isfile(p)}, "outputs": outputs})


def _load(config, min_fibers):
    return io.load_fibers(config.input, n_points=config.n_points, min_fibers=min_fibers)


def _preprocess(config, ds, multi_subject):
    b = basis_mod.load_basis(config.basis) if config.basis else None
    return preprocess(ds, basis=b, T=config.T, multi_subject=multi_subject,
                      template_iter=config.template_iter, align_iter=config.align_iter)


def _truth_report(path, ids, labels):
    truth = io.read_labels(path)
    missing = [i for i in ids if i not in truth]
    if missing:
        raise StageError(f"truth file lacks {len(missing)} id(s), e.g. {missing[0]}")
    t = [truth[i] for i in ids]
    return {"RI": evaluate.rand_index(t, labels), "ARI": evaluate.adjusted_rand_index(t, labels)}


# ---------------------------------------------------------------- stages

def stage_synth(config, out):
    spec = PRESETS[config.preset](seed=config.seed)
    res = synth.synth_generate(spec)
    ds = io.FiberDataset([io.FiberRecord(f.subject_id, f.scan_id, f.fiber_id, f.points) for f in res.fibers],
                         spec.n_points)
    io.save_fibers(ds, os.path.join(out, "fibers.tsv"))
    io.write_labels(os.path.join(out, "fiber_labels.csv"), list(res.fiber_labels), res.fiber_labels.values())
    io.write_labels(os.path.join(out, "subject_labels.csv"), list(res.subject_labels), res.subject_labels.values())
    io.write_table(os.path.join(out, "counts.csv"), ["id", "count"], list(res.counts.items()))
    return []


def _write_decomposition(out, pre):
    T = pre.basis.T
    header = (["id", "t1", "t2", "t3"] + [f"c{k + 1}" for k in range(T)] + ["v1", "v2", "v3"]
              + [f"o{i}{j}" for i in range(1, 4) for j in range(1, 4)] + ["s1", "s2", "s3", "recon_error"])
    rows = []
    for key, d in zip(pre.keys, pre.decompositions):
        rows.append([key, *map(float, d.translation), *map(float, d.shape_coeffs),
                     *map(float, d.rotation_embedding), *map(float, np.ravel(d.rotation)), *map(float, d.offset),
                     float(d.recon_error)])
    io.write_table(os.path.join(out, "decomposition.csv"), header, rows)
    io.write_table(os.path.join(out, "warpings.csv"), ["id"] + [f"s{k}" for k in range(pre.basis.n_points)],
                   [[key, *map(float, d.warping)] for key, d in zip(pre.keys, pre.decompositions)])
    feats = [m for m in COMPONENTS if m in pre.features]
    fheader = ["id"] + [f"{m}{k + 1}" for m in feats for k in range(pre.features[m].shape[1])]
    frows = [[key, *[float(v) for m in feats for v in pre.features[m][i]]] for i, key in enumerate(pre.keys)]
    io.write_table(os.path.join(out, "features.csv"), fheader, frows)
    io.dump_json(os.path.join(out, "preprocessing.json"), pre.record())
    basis_mod.save_basis(pre.basis, os.path.join(out, "basis.txt"))


def stage_decompose(config, out):
    ds = _load(config, config.min_fibers)
    pre = _preprocess(config, ds, multi_subject=len(ds.units()) > 1)
    _write_decomposition(out, pre)
    return [config.input, config.basis]


def stage_fit_single(config, out):
    ds = _load(config, 0)
    units = ds.units()
    if config.unit is None and len(units) > 1:
        raise StageError(f"data has {len(units)} units; select one with --unit")
    unit = config.unit or next(iter(units))
    if unit not in units:
        raise StageError(f"unit {unit!r} not found")
    ds.fibers = units[unit]
    pre = _preprocess(config, ds, multi_subject=False)
    mc = MixtureConfig(K=config.K or 10, n_iter=config.iters or 11000, burn_in=config.burnin or 0,
                       thin=config.thin, seed=config.seed, param_stride=config.param_stride)
    if config.burnin is None:
        mc.burn_in = 1000 if mc.n_iter > 1000 else 0
    chain = fit_single({m: pre.features[m] for m in config.components}, mc)
    io.write_jsonl(os.path.join(out, "chain.jsonl"),
                   ({"iter": int(it), "assignments": a, "weights": w, "occupied": int(k)}
                    for it, a, w, k in zip(chain.iterations, chain.assignments, chain.weights, chain.occupied)))
    if chain.params:
        io.write_jsonl(os.path.join(out, "params.jsonl"),
                       ({"iter": it, "means": mu, "covs": cov} for it, mu, cov in chain.params))
    p = evaluate.coclustering(chain.assignments)
    k = evaluate.posterior_mode_k(chain.occupied)
    part = evaluate.extract_partition(p, k)
    io.write_matrix(os.path.join(out, "coclustering.csv"), pre.keys, p)
    io.write_labels(os.path.join(out, "partition.csv"), pre.keys, part.labels)
    summary = {"posterior_mode_k": k, "discrepancy": part.discrepancy, "n_draws": len(chain)}
    if config.truth:
        summary.update(_truth_report(config.truth, pre.keys, part.labels))
    io.dump_json(os.path.join(out, "summary.json"), summary)
    _write_decomposition(out, pre)
    return [config.input, config.basis, config.truth]


def stage_fit_ndp(config, out):
    ds = _load(config, config.min_fibers)
    if len(ds.units()) < 2:
        raise StageError("fit-ndp needs at least 2 subject scans after filtering")
    pre = _preprocess(config, ds, multi_subject=True)
    subjects = pre.subjects(list(config.components))
    nc = NdpConfig(K=config.K or 9, L=config.L, n_iter=config.iters or 5000, thin=config.thin,
                   components=tuple(config.components), joint_counts=config.joint_counts, seed=config.seed)
    nc.burn_in = config.burnin if config.burnin is not None else (500 if nc.n_iter > 500 else 0)
    chain = fit_ndp(subjects, nc)
    ids = [s.subject_id for s in subjects]
    io.write_jsonl(os.path.join(out, "chain.jsonl"),
                   ({"iter": int(it), "subject_assign": z, "fiber_assign": x, "occupied": int(k),
                     "alpha": float(a), "beta": float(b), "subject_weights": w}
                    for it, z, x, k, a, b, w in zip(chain.iterations, chain.subject_assign, chain.fiber_assign,
                                                    chain.occupied, chain.alpha, chain.beta,
                                                    chain.subject_weights)))
    p = evaluate.coclustering(chain.subject_assign)
    k = evaluate.posterior_mode_k(chain.occupied)
    part = evaluate.extract_partition(p, k)
    io.write_matrix(os.path.join(out, "subject_coclustering.csv"), ids, p)
    io.write_labels(os.path.join(out, "subject_partition.csv"), ids, part.labels)
    io.write_table(os.path.join(out, "counts.csv"), ["id", "count"], [(s.subject_id, s.count) for s in subjects])
    summary = {"posterior_mode_k": k, "discrepancy": part.discrepancy, "n_draws": len(chain),
               "alpha_mean": float(chain.alpha.mean()), "beta_mean": float(chain.beta.mean()),
               "dropped_units": ds.provenance.get("dropped_units", [])}
    if config.truth:
        summary.update(_truth_report(config.truth, ids, part.labels))
    io.dump_json(os.path.join(out, "summary.json"), summary)
    _write_decomposition(out, pre)
    return [config.input, config.basis, config.truth]


def stage_eval(config, out):
    truth = io.read_labels(config.truth)
    est = io.read_labels(config.estimate)
    ids = [i for i in truth if i in est]
    if len(ids) != len(truth) or len(ids) != len(est):
        raise StageError("truth and estimate must label the same ids")
    t = [truth[i] for i in ids]
    e = [est[i] for i in ids]
    io.write_table(os.path.join(out, "report.csv"), ["metric", "value"],
                   [("RI", evaluate.rand_index(t, e)), ("ARI", evaluate.adjusted_rand_index(t, e)),
                    ("n", len(ids))])
    return [config.truth, config.estimate]


def stage_reconstruct(config, out):
    ds = _load(config, 0)
    d = config.decomposition
    b = basis_mod.load_basis(os.path.join(d, "basis.txt"))
    header, rows = io.read_table(os.path.join(d, "decomposition.csv"))
    _, wrows = io.read_table(os.path.join(d, "warpings.csv"))
    col = {h: i for i, h in enumerate(header)}
    warps = {r[0]: np.array([float(v) for v in r[1:]]) for r in wrows}
    fibers = {f.key: f for f in ds.fibers}
    with open(os.path.join(d, "preprocessing.json")) as fh:
        shifts = {u: np.array(v) for u, v in json.load(fh)["unit_shift"].items()}
    recs, table = [], []
    for r in rows:
        key = r[0]
        if key not in fibers:
            raise StageError(f"fiber {key} is not in the input file")
        f = fibers[key]
        dec = basis_mod.FiberDecomposition(
            np.array([float(r[col[c]]) for c in ("t1", "t2", "t3")]),
            np.array([float(r[col[f"c{k + 1}"]]) for k in range(b.T)]),
            np.array([float(r[col[f"o{i}{j}"]]) for i in range(1, 4) for j in range(1, 4)]).reshape(3, 3),
            warps[key], float(r[col["recon_error"]]),
            np.array([float(r[col[c]]) for c in ("s1", "s2", "s3")]))
        shift = shifts.get(f.unit, np.zeros(3))
        err = basis_mod.pointwise_error(f.points - shift, dec, b)
        recs.append(io.FiberRecord(f.subject_id, f.scan_id, f.fiber_id, basis_mod.reconstruct(dec, b) + shift))
        table.append([key, float(err.max()), float(err.mean()), dec.recon_error])
    io.write_table(os.path.join(out, "reconstruction_error.csv"),
                   ["id", "max_error", "mean_error", "recon_error"], table)
    io.save_fibers(io.FiberDataset(recs, b.n_points, ds.connection_id), os.path.join(out, "reconstructed.tsv"))
    return [config.input, os.path.join(d, "basis.txt"), os.path.join(d, "decomposition.csv")]


RUNNERS = {"synth": stage_synth, "decompose": stage_decompose, "fit-single": stage_fit_single,
           "fit-ndp": stage_fit_ndp, "eval": stage_eval, "reconstruct": stage_reconstruct}


def run(config):
    """Execute one stage; returns the process exit status."""
    try:
        config.validate()
    except StageError as exc:
        print(f"fibermix: error: {exc}", file=sys.stderr)
        return 2
    out = os.path.abspath(config.out)
    parent = os.path.dirname(out)
    os.makedirs(parent, exist_ok=True)
    stage_dir = tempfile.mkdtemp(prefix=".fibermix-stage-", dir=parent)
    try:
        inputs = RUNNERS[config.mode](config, stage_dir)
        _write_manifest(stage_dir, config, inputs)
    except Exception as exc:  # any stage failure: drop partial outputs
        shutil.rmtree(stage_dir, ignore_errors=True)
        log.debug("stage failed", exc_info=True)
        print(f"fibermix: {config.mode} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    os.makedirs(out, exist_ok=True)
    for name in os.listdir(stage_dir):
        os.replace(os.path.join(stage_dir, name), os.path.join(out, name))
    os.rmdir(stage_dir)
    return 0


# ---------------------------------------------------------------- parsing

def read_config_file(path):
    """Flat ``key = value`` pairs; ``#`` starts a comment."""
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise StageError(f"{path}:{lineno}: expected key = value")
            k, v = (s.strip() for s in line.split("=", 1))
            out[k.replace("-", "_")] = v
    return out


def _coerce(name, value):
    types = {f.name: f.type for f in fields(RunConfig)}
    if name not in types or name == "mode":
        raise StageError(f"unknown config key {name!r}")
    if value is None or not isinstance(value, str):
        return value
    t = types[name]
    if name == "components":
        return tuple(v.strip() for v in value.split(",") if v.strip())
    if t is int:
        return int(value)
    if t is bool:
        if value.lower() not in ("1", "0", "true", "false", "yes", "no"):
            raise StageError(f"{name}: expected a boolean, got {value!r}")
        return value.lower() in ("1", "true", "yes")
    return value


def build_parser():
    p = argparse.ArgumentParser(prog="fibermix", description="Fiber decomposition and Bayesian clustering.")
    p.add_argument("stage", choices=STAGES)
    p.add_argument("--config", help="flat key = value file; flags override it")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--input", help="curve file")
    p.add_argument("--truth", help="label CSV with true labels")
    p.add_argument("--estimate", help="label CSV to score (eval)")
    p.add_argument("--decomposition", help="output directory of a decompose run (reconstruct)")
    p.add_argument("--basis", help="persisted shape basis to reuse instead of fitting one")
    p.add_argument("--preset", help=f"synthetic preset: {', '.join(PRESETS)}")
    p.add_argument("--components", help="comma separated subset of shape,trans,rot")
    p.add_argument("--K", type=int)
    p.add_argument("--L", type=int)
    p.add_argument("--T", type=int, help="number of FPCA modes")
    p.add_argument("--iters", type=int)
    p.add_argument("--burnin", type=int)
    p.add_argument("--thin", type=int)
    p.add_argument("--n-points", type=int, dest="n_points")
    p.add_argument("--min-fibers", type=int, dest="min_fibers")
    p.add_argument("--joint-counts", action="store_true", default=None, dest="joint_counts")
    p.add_argument("--template-iter", type=int, dest="template_iter")
    p.add_argument("--align-iter", type=int, dest="align_iter")
    p.add_argument("--param-stride", type=int, dest="param_stride")
    p.add_argument("--unit", help="subject:scan unit to fit (fit-single)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def config_from_args(argv=None):
    args = build_parser().parse_args(argv)
    values = {}
    if args.config:
        values.update({k: _coerce(k, v) for k, v in read_config_file(args.config).items()})
    for k, v in vars(args).items():
        if k in ("stage", "config", "verbose") or v is None:
            continue
        values[k] = _coerce(k, v)
    if "out" not in values and os.environ.get("FIBERMIX_OUT"):
        values["out"] = os.environ["FIBERMIX_OUT"]
    return RunConfig(mode=args.stage, **values), args.verbose


def main(argv=None):
    try:
        config, verbose = config_from_args(argv)
    except StageError as exc:
        print(f"fibermix: error: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.DEBUG if verbose else logging.WARNING, format="%(name)s: %(message)s")
    return run(config)


if __name__ == "__main__":
    sys.exit(main())
