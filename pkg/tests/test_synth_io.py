import numpy as np
import pytest

from fibermix import io, synth


def dataset_from(res, n_points):
    return io.FiberDataset([io.FiberRecord(f.subject_id, f.scan_id, f.fiber_id, f.points) for f in res.fibers],
                           n_points)


def write_raw(path, rows, header="#fibercurves\tversion=1\tgrid=20\tnpolicy=raw\tconnection=lh,rh"):
    path.write_text("\n".join([header] + rows) + "\n")


def record(sid, scan, fid, pts):
    pts = np.asarray(pts, dtype=float)
    return "\t".join([sid, scan, fid, str(len(pts))] + [io.fmt(v) for v in pts.ravel()])


# ---------------------------------------------------------------- generator

def test_zero_spreads_give_identical_fibers():
    b = synth.BundleSpec("scurve", shape_spread=0, translation_spread=0, rotation_spread=0, noise=0)
    res = synth.synth_generate(synth.SynthSpec([[b]], fibers_per_bundle=5, n_points=40, seed=1))
    first = res.fibers[0].points
    assert all(np.array_equal(f.points, first) for f in res.fibers)


def test_generator_labels_and_counts():
    spec = synth.retest_spec(seed=2, n_subjects=3, scans=2, count_range=(10, 20), n_points=30)
    res = synth.synth_generate(spec)
    assert len(res.subject_labels) == 6 and sorted(set(res.subject_labels.values())) == [1, 2, 3]
    assert sum(res.counts.values()) == len(res.fibers) == len(res.fiber_labels)
    assert all(10 <= c <= 20 for c in res.counts.values())
    assert all(f.points.shape == (30, 3) for f in res.fibers)


def test_two_bundle_preset_offset():
    res = synth.synth_generate(synth.two_bundle_spec(seed=3, n_fibers=40, noise=0.0))
    cent = {1: [], 2: []}
    for f in res.fibers:
        cent[f.bundle].append(f.points.mean(axis=0))
    gap = np.mean(cent[2], axis=0) - np.mean(cent[1], axis=0)
    assert abs(gap[1] - 20.0) < 1.5 and len(cent[1]) == len(cent[2]) == 20


def test_invalid_specs():
    with pytest.raises(ValueError):
        synth.synth_generate(synth.SynthSpec([[synth.BundleSpec("spiral")]]))
    with pytest.raises(ValueError):
        synth.synth_generate(synth.SynthSpec([[synth.BundleSpec(noise=-1)]]))
    with pytest.raises(ValueError):
        synth.synth_generate(synth.SynthSpec([[synth.BundleSpec(warp_spread=0.5)]]))
    with pytest.raises(ValueError):
        synth.synth_generate(synth.SynthSpec([]))


def test_same_seed_byte_identical_files(tmp_path):
    outs = []
    for k in range(2):
        res = synth.synth_generate(synth.population_spec(seed=4, fibers_per_bundle=3, n_points=20))
        p = tmp_path / f"f{k}.tsv"
        io.save_fibers(dataset_from(res, 20), p)
        outs.append(p.read_bytes())
    assert outs[0] == outs[1]
    res = synth.synth_generate(synth.population_spec(seed=5, fibers_per_bundle=3, n_points=20))
    io.save_fibers(dataset_from(res, 20), tmp_path / "g.tsv")
    assert (tmp_path / "g.tsv").read_bytes() != outs[0]


# ---------------------------------------------------------------- reader

def test_load_two_fibers(tmp_path):
    p = tmp_path / "two.tsv"
    write_raw(p, [record("s1", "a", "f1", np.random.default_rng(0).standard_normal((7, 3)).cumsum(0)),
                  record("s1", "a", "f2", [[0, 0, 0], [1, 0, 0], [1, 1, 0]])],
              header="#fibercurves\tversion=1\tgrid=100\tnpolicy=raw\tconnection=lh,rh")
    ds = io.load_fibers(p)
    assert len(ds.fibers) == 2 and ds.n_points == 100
    assert all(f.points.shape == (100, 3) for f in ds.fibers)
    assert ds.connection_id == ("lh", "rh")
    assert ds.fibers[1].key == "s1:a:f2"


def test_one_point_fiber_error_names_fiber(tmp_path):
    p = tmp_path / "bad.tsv"
    write_raw(p, [record("s1", "a", "f1", [[0, 0, 0], [1, 1, 1]]), record("s1", "a", "lonely7", [[1, 2, 3]])])
    with pytest.raises(io.FormatError, match=r"bad.tsv:3: fiber lonely7"):
        io.load_fibers(p)


@pytest.mark.parametrize("row, msg", [
    ("s1\ta\tf1\t2\t0\t0\t0\t1\t1", "expected 6 coordinates"),
    ("s1\ta\tf1\t2\t0\t0\t0\t1\tnan\t1", "non-finite"),
    ("s1\ta\tf1\ttwo\t0\t0\t0\t1\t1\t1", "fiber f1"),
    ("s1\ta", "at least 4 fields"),
])
def test_malformed_records_report_line(tmp_path, row, msg):
    p = tmp_path / "bad.tsv"
    write_raw(p, [record("s0", "a", "ok", [[0, 0, 0], [1, 0, 0]]), row])
    with pytest.raises(io.FormatError, match=msg) as exc:
        io.load_fibers(p)
    assert ":3:" in str(exc.value)


def test_duplicates_and_header_errors(tmp_path):
    p = tmp_path / "dup.tsv"
    r = record("s1", "a", "f1", [[0, 0, 0], [1, 0, 0]])
    write_raw(p, [r, r])
    with pytest.raises(io.FormatError, match="duplicate"):
        io.load_fibers(p)
    p.write_text("s1\ta\tf1\t2\t0\t0\t0\t1\t0\t0\n")
    with pytest.raises(io.FormatError, match="header"):
        io.load_fibers(p)
    write_raw(p, [r], header="#fibercurves\tversion=9")
    with pytest.raises(io.FormatError, match="version"):
        io.load_fibers(p)


def test_round_trip_value_identical(tmp_path):
    res = synth.synth_generate(synth.two_bundle_spec(seed=6, n_fibers=10, n_points=25))
    ds = dataset_from(res, 25)
    p1, p2 = tmp_path / "a.tsv", tmp_path / "b.tsv"
    io.save_fibers(ds, p1)
    back = io.load_fibers(p1)
    assert all(np.array_equal(a.points, b.points) for a, b in zip(ds.fibers, back.fibers))
    io.save_fibers(back, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_min_fibers_drops_small_units(tmp_path):
    spec = synth.retest_spec(seed=7, n_subjects=2, scans=2, count_range=(3, 12), n_points=20)
    res = synth.synth_generate(spec)
    p = tmp_path / "u.tsv"
    io.save_fibers(dataset_from(res, 20), p)
    ds = io.load_fibers(p, min_fibers=8)
    small = sorted(u for u, c in res.counts.items() if c < 8)
    assert ds.provenance["dropped_units"] == small
    assert set(ds.units()) == {u for u, c in res.counts.items() if c >= 8}


def test_small_files_round_trip(tmp_path):
    ids = ["a", "b", "c"]
    io.write_labels(tmp_path / "l.csv", ids, [2, 1, 2])
    assert io.read_labels(tmp_path / "l.csv") == {"a": 2, "b": 1, "c": 2}
    m = np.random.default_rng(8).random((3, 3))
    io.write_matrix(tmp_path / "m.csv", ids, m)
    got_ids, got = io.read_matrix(tmp_path / "m.csv")
    assert list(got_ids) == ids and np.array_equal(got, m)
    recs = [{"it": 1, "x": np.float64(0.1), "v": np.arange(3)}, {"it": 2, "x": None, "v": []}]
    io.write_jsonl(tmp_path / "c.jsonl", recs)
    back = io.read_jsonl(tmp_path / "c.jsonl")
    assert back[0] == {"it": 1, "x": 0.1, "v": [0, 1, 2]} and back[1]["x"] is None
