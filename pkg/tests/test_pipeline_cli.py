import json
import os
import subprocess
import sys

import numpy as np
import pytest

from fibermix import basis as bm
from fibermix import cli, curves, io, pipeline, synth


def small_dataset(seed=0, n_points=30):
    spec = synth.population_spec(seed=seed, fibers_per_bundle=4, n_points=n_points, subjects_per_cluster=2)
    res = synth.synth_generate(spec)
    recs = [io.FiberRecord(f.subject_id, f.scan_id, f.fiber_id, f.points) for f in res.fibers]
    return io.FiberDataset(recs, n_points), res


@pytest.fixture(scope="module")
def prepped():
    ds, res = small_dataset()
    return ds, res, pipeline.preprocess(ds, T=3, template_iter=2, align_iter=5)


# ---------------------------------------------------------------- preprocessing

def test_standardized_components(prepped):
    _, _, pre = prepped
    for m, z in pre.features.items():
        assert np.abs(z.mean(axis=0)).max() < 1e-10
        assert np.abs(z.var(axis=0) - 1).max() < 1e-10


def test_inverse_restores_raw(prepped):
    ds, _, pre = prepped
    back = pipeline.invert_features(pre.features, pre, units=pre.units)
    for m in ("shape", "rot"):
        assert np.abs(back[m] - pre.raw[m]).max() < 1e-10
    trans = np.array([d.translation for d in pre.decompositions])
    shifts = np.array([pre.unit_shift[u] for u in pre.units])
    assert np.abs(back["trans"] - (trans + shifts)).max() < 1e-10
    # and the undemeaned translation is the fiber's own centroid
    cents = np.array([curves.centroid(f.points) for f in ds.fibers])
    assert np.abs(back["trans"] - cents).max() < 1e-10


def test_per_unit_demeaning(prepped):
    _, _, pre = prepped
    units = np.array(pre.units)
    for u in set(pre.units):
        assert np.abs(pre.raw["trans"][units == u].mean(axis=0)).max() < 1e-9


def test_single_subject_mode_skips_demeaning():
    ds, _ = small_dataset(seed=1)
    ds.fibers = ds.units()["subj1:scan1"]
    pre = pipeline.preprocess(ds, T=2, multi_subject=False, template_iter=1, align_iter=3)
    assert all(np.array_equal(v, np.zeros(3)) for v in pre.unit_shift.values())
    cents = np.array([curves.centroid(f.points) for f in ds.fibers])
    assert np.abs(pre.raw["trans"] - cents).max() < 1e-10


def test_zero_variance_coordinate_warns():
    x = np.column_stack([np.arange(5.0), np.full(5, 3.0)])
    with pytest.warns(RuntimeWarning, match="zero-variance"):
        s = pipeline.fit_scaling(x, "trans")
    assert s.skipped == [1]
    assert np.array_equal(s.apply(x)[:, 1], np.zeros(5))


def test_subjects_grouping(prepped):
    _, res, pre = prepped
    subs = pre.subjects(["shape"])
    assert [s.subject_id for s in subs] == list(res.subject_labels)
    assert [s.count for s in subs] == list(res.counts.values())


def test_persisted_basis_reuse(prepped, tmp_path):
    ds, _, pre = prepped
    bm.save_basis(pre.basis, tmp_path / "b.txt")
    again = pipeline.preprocess(ds, basis=bm.load_basis(tmp_path / "b.txt"), align_iter=5)
    assert again.template_fit is None
    assert np.array_equal(again.raw["shape"], pre.raw["shape"])


# ---------------------------------------------------------------- CLI

FAST = ["--n-points", "30", "--template-iter", "2", "--align-iter", "5"]


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("synth")
    assert cli.main(["synth", "--seed", "3", "--out", str(d / "run")]) == 0
    return d / "run"


def read_dir(path):
    return {name: (path / name).read_bytes() for name in sorted(os.listdir(path))}


def test_synth_outputs_and_manifest(synth_dir):
    names = set(os.listdir(synth_dir))
    assert {"fibers.tsv", "fiber_labels.csv", "subject_labels.csv", "counts.csv", "manifest.json"} <= names
    man = json.loads((synth_dir / "manifest.json").read_text())
    assert man["seed"] == 3 and man["stage"] == "synth"
    assert set(man["outputs"]) == names - {"manifest.json"}


def test_synth_repeat_is_byte_identical(synth_dir, tmp_path):
    assert cli.main(["synth", "--seed", "3", "--out", str(tmp_path / "again")]) == 0
    assert read_dir(tmp_path / "again") == read_dir(synth_dir)


@pytest.fixture(scope="module")
def fit_dir(synth_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("fit") / "fit"
    argv = ["fit-single", "--seed", "1", "--input", str(synth_dir / "fibers.tsv"), "--out", str(out),
            "--truth", str(synth_dir / "fiber_labels.csv"), "--components", "trans",
            "--iters", "400", "--burnin", "100", *FAST]
    assert cli.main(argv) == 0
    return out, argv


def test_fit_single_recovers_bundles(fit_dir):
    out, _ = fit_dir
    summary = json.loads((out / "summary.json").read_text())
    assert summary["posterior_mode_k"] == 2 and summary["ARI"] >= 0.95
    ids, p = io.read_matrix(out / "coclustering.csv")
    labels = io.read_labels(out / "partition.csv")
    lab = np.array([labels[i] for i in ids])
    same = lab[:, None] == lab[None, :]
    assert p[same].mean() > 0.95 and p[~same].mean() < 0.05
    assert {"chain.jsonl", "decomposition.csv", "basis.txt", "manifest.json"} <= set(os.listdir(out))


def test_fit_single_repeat_is_byte_identical(fit_dir, tmp_path):
    out, argv = fit_dir
    argv = list(argv)
    argv[argv.index("--out") + 1] = str(tmp_path / "again")
    assert cli.main(argv) == 0
    assert read_dir(tmp_path / "again") == read_dir(out)


def test_eval_identical_labels(synth_dir, tmp_path):
    lab = str(synth_dir / "fiber_labels.csv")
    assert cli.main(["eval", "--truth", lab, "--estimate", lab, "--out", str(tmp_path / "ev")]) == 0
    _, rows = io.read_table(tmp_path / "ev" / "report.csv")
    got = {r[0]: float(r[1]) for r in rows}
    assert got["RI"] == 1.0 and got["ARI"] == 1.0


def test_reconstruct_reports_recon_error(fit_dir, synth_dir, tmp_path):
    out, _ = fit_dir
    assert cli.main(["reconstruct", "--seed", "0", "--input", str(synth_dir / "fibers.tsv"),
                     "--decomposition", str(out), "--out", str(tmp_path / "rec"), "--n-points", "30"]) == 0
    header, rows = io.read_table(tmp_path / "rec" / "reconstruction_error.csv")
    assert header == ["id", "max_error", "mean_error", "recon_error"]
    for r in rows:
        assert float(r[1]) == pytest.approx(float(r[3]), rel=1e-9, abs=1e-9)
    rec = io.load_fibers(tmp_path / "rec" / "reconstructed.tsv")
    assert len(rec.fibers) == len(rows)


def test_fit_ndp_small(tmp_path):
    ds, res = small_dataset(seed=2)
    io.save_fibers(ds, tmp_path / "f.tsv")
    io.write_labels(tmp_path / "s.csv", list(res.subject_labels), res.subject_labels.values())
    out = tmp_path / "ndp"
    assert cli.main(["fit-ndp", "--seed", "0", "--input", str(tmp_path / "f.tsv"), "--out", str(out),
                     "--truth", str(tmp_path / "s.csv"), "--iters", "60", "--burnin", "20", "--K", "4",
                     "--L", "5", "--components", "shape", "--min-fibers", "1", *FAST]) == 0
    ids, p = io.read_matrix(out / "subject_coclustering.csv")
    assert list(ids) == list(res.subject_labels) and p.shape == (6, 6)
    assert {"chain.jsonl", "subject_partition.csv", "counts.csv", "summary.json"} <= set(os.listdir(out))


def test_failure_removes_outputs(tmp_path, capsys):
    bad = tmp_path / "bad.tsv"
    bad.write_text("#fibercurves\tversion=1\tgrid=30\ns1\ta\tf1\t1\t0\t0\t0\n")
    out = tmp_path / "out"
    assert cli.main(["decompose", "--seed", "0", "--input", str(bad), "--out", str(out)]) == 1
    assert not out.exists()
    assert not [n for n in os.listdir(tmp_path) if n.startswith(".fibermix-stage-")]
    assert "fiber f1" in capsys.readouterr().err


def test_fit_single_needs_unit_for_multiunit(tmp_path):
    ds, _ = small_dataset(seed=3)
    io.save_fibers(ds, tmp_path / "f.tsv")
    assert cli.main(["fit-single", "--seed", "0", "--input", str(tmp_path / "f.tsv"),
                     "--out", str(tmp_path / "o")]) == 1
    assert not (tmp_path / "o").exists()


def test_seed_and_output_required(tmp_path, monkeypatch):
    monkeypatch.delenv("FIBERMIX_OUT", raising=False)
    assert cli.main(["synth", "--out", str(tmp_path / "x")]) == 2
    assert cli.main(["synth", "--seed", "1"]) == 2
    assert cli.main(["synth", "--seed", "1", "--preset", "nope", "--out", str(tmp_path / "x")]) == 2
    monkeypatch.setenv("FIBERMIX_OUT", str(tmp_path / "env"))
    assert cli.main(["synth", "--seed", "1"]) == 0
    assert (tmp_path / "env" / "fibers.tsv").exists()


def test_config_file_with_flag_override(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# defaults\nseed = 5\ncomponents = shape, rot\nK = 7\njoint-counts = yes\n")
    config, _ = cli.config_from_args(["fit-ndp", "--config", str(cfg), "--K", "4", "--out", "o", "--input", "i"])
    assert config.seed == 5 and config.K == 4 and config.components == ("shape", "rot")
    assert config.joint_counts is True
    cfg.write_text("bogus = 1\n")
    assert cli.main(["synth", "--config", str(cfg)]) == 2
    cfg.write_text("seed 5\n")
    assert cli.main(["synth", "--config", str(cfg)]) == 2


def test_console_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "fibermix.cli", "eval", "--truth", "missing.csv",
                        "--estimate", "missing.csv", "--out", str(tmp_path / "e")],
                       capture_output=True, text=True)
    assert r.returncode == 1 and "eval failed" in r.stderr
