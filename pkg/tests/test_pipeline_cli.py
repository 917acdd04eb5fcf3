import json
from collections import Counter

import numpy as np
import pytest

from covact import pipeline as pl
from covact.cli import main
from covact.config import load_config
from covact.dataset import read_manifest
from covact.features import compute_flows, divergence_vorticity
from covact.flow import spatial_gradient
from covact.io import read_frames
from covact.synth import SynthSpec, _sample_video, generate, render_frame

FAST = ["--pipeline-clip-length", "6", "--split-test-groups", "g1"]


@pytest.fixture(scope="module")
def store(tiny_dataset, tmp_path_factory):
    out = tmp_path_factory.mktemp("store")
    assert main(["extract", "--manifest", str(tiny_dataset / "manifest.csv"), "--out", str(out), *FAST]) == 0
    return out


@pytest.fixture(scope="module")
def dictionary(store, tmp_path_factory):
    out = tmp_path_factory.mktemp("dict")
    assert main(["train", "--store", str(store), "--out", str(out), *FAST]) == 0
    return out


def test_synth_shape(tmp_path):
    assert main(["synth", "--out", str(tmp_path), "--videos", "10", "--frames", "40", "--width", "24", "--height", "20"]) == 0
    dirs = [p for p in tmp_path.iterdir() if p.is_dir()]
    assert len(dirs) == 30
    m = read_manifest(tmp_path / "manifest.csv")
    assert Counter(r.label for r in m.records) == {"oscillate": 10, "translate": 10, "rotate": 10}
    assert all(len(list(d.iterdir())) == 40 for d in dirs)


def test_synth_is_byte_identical(tmp_path):
    spec = SynthSpec(videos_per_class=2, frames=4, width=24, height=20, groups=2, depth=True, seed=9)
    generate(spec, tmp_path / "a")
    generate(spec, tmp_path / "b")
    files_a = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    files_b = sorted(p.relative_to(tmp_path / "b") for p in (tmp_path / "b").rglob("*") if p.is_file())
    assert files_a == files_b
    for f in files_a:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_synth_rejects_unknown_class_and_bad_path(tmp_path):
    with pytest.raises(ValueError):
        SynthSpec(classes=("spin",))
    (tmp_path / "file").write_text("x")
    assert main(["synth", "--out", str(tmp_path / "file" / "sub")]) == 2


def test_rotation_vorticity_sign_is_consistent():
    spec = SynthSpec(classes=("rotate",), frames=40, noise=0.0)
    rng = np.random.default_rng(5)
    for _ in range(3):
        v = _sample_video(rng, "rotate", spec, None)
        frames, covers = zip(*(render_frame(v, t, spec.width, spec.height) for t in range(spec.frames)))
        flows = compute_flows(np.stack(frames))
        means = []
        for start in (0, 20):
            vals = []
            for k in range(start, start + 19):
                du_dx, du_dy = spatial_gradient(flows[k].u)
                dv_dx, dv_dy = spatial_gradient(flows[k].v)
                g = np.stack([np.stack([du_dx, du_dy], -1), np.stack([dv_dx, dv_dy], -1)], -2)
                _, vort = divergence_vorticity(g)
                vals.append(vort[covers[k] > 0.9].mean())
            means.append(np.mean(vals))
        # counter-clockwise on screen with y pointing down
        assert all(m < 0 for m in means), means


def test_extract_windows_and_dimensions(store, tiny_dataset):
    cov, logs = pl.load_store(store)
    assert len(cov.records) == 12 * 2  # 12 frames, clip length 6
    assert {c.d for c in cov.records} == {19}
    assert {len(l.v) for l in logs.records} == {190}
    assert cov.features == load_config().feature_mask().names
    assert (store / "config.ini").exists()


def test_forty_frames_make_two_clips(tmp_path):
    spec = SynthSpec(classes=("translate",), videos_per_class=1, frames=40, width=24, height=20)
    m = generate(spec, tmp_path / "d")
    covs = pl.extract_video(m.records[0], load_config(None, {"pipeline.features": "MF"}))
    assert [c.clip_id for c in covs] == [0, 1]


def test_extract_rerun_is_identical(store, tiny_dataset, tmp_path):
    assert main(["extract", "--manifest", str(tiny_dataset / "manifest.csv"), "--out", str(tmp_path), *FAST]) == 0
    for name in (pl.COV_FILE, pl.LOG_FILE, "config.ini"):
        assert (tmp_path / name).read_bytes() == (store / name).read_bytes()


def test_parallel_extraction_matches_serial(store, tiny_dataset, tmp_path):
    argv = ["extract", "--manifest", str(tiny_dataset / "manifest.csv"), "--out", str(tmp_path), *FAST]
    assert main(argv + ["--pipeline-jobs", "2"]) == 0
    assert (tmp_path / pl.COV_FILE).read_bytes() == (store / pl.COV_FILE).read_bytes()


def test_train_counts_match_manifest(dictionary, tiny_dataset, capsys):
    model = pl.load_model(dictionary)
    m = read_manifest(tiny_dataset / "manifest.csv")
    train = [r for r in m.records if r.group != "g1"]
    expect = Counter(r.label for r in train)
    assert model.histogram() == {k: 2 * v for k, v in sorted(expect.items())}
    assert len(model.covs) == 2 * len(train)
    assert model.groups == {"g0"}
    # one exemplar video per class
    assert len({e.video_id for e in model.exemplars}) == 3
    summary = (dictionary / "summary.txt").read_text()
    assert f"atoms {len(model.covs)}" in summary


def test_train_with_two_classes_five_clips():
    from covact.covariance import CovarianceDescriptor
    from covact.spd import log_descriptor

    rng = np.random.default_rng(0)
    covs = []
    for lab in "ab":
        for i in range(5):
            a = rng.normal(size=(4, 4))
            covs.append(CovarianceDescriptor(a @ a.T + np.eye(4), 50, lab, f"{lab}{i}", 0, f"g{i % 2}"))
    covs.append(CovarianceDescriptor(np.eye(4), 50, "a", "held", 0, "gt"))
    logs = [log_descriptor(c) for c in covs]
    model, test = pl.train(covs, logs, load_config(None, {"split.test_groups": "gt"}))
    assert len(model.covs) == 10 and [v.video_id for v in test] == ["held"]


def test_corrupt_store_error_names_file(store, tmp_path, capsys):
    for name in (pl.COV_FILE, pl.LOG_FILE):
        (tmp_path / name).write_bytes((store / name).read_bytes())
    cov = tmp_path / pl.COV_FILE
    lines = cov.read_text().split("\n")
    lines[5] = lines[5].replace("\t", "\tX", 1)
    cov.write_text("\n".join(lines))
    assert main(["train", "--store", str(tmp_path), "--out", str(tmp_path / "d")]) == 2
    err = capsys.readouterr().err
    assert "covariances.tsv:6" in err


def test_eval_all_methods(store, dictionary, tiny_dataset, tmp_path, capsys):
    argv = ["eval", "--store", str(store), "--dictionary", str(dictionary), "--out", str(tmp_path)]
    argv += ["--manifest", str(tiny_dataset / "manifest.csv"), "--pipeline-methods", "all", *FAST]
    assert main(argv) == 0
    reports = [json.loads(l) for l in (tmp_path / "report.jsonl").read_text().splitlines()]
    assert reports[0] == {"format": "covact-eval", "version": 1}
    assert [r["method"] for r in reports[1:]] == ["omp", "tsc", "nn"]
    assert all(r["total"] == 6 for r in reports[1:])
    assert all(r["classes"] == ["oscillate", "translate", "rotate"] for r in reports[1:])
    rows = (tmp_path / "predictions.tsv").read_text().splitlines()
    assert rows[0] == "# covact-predictions v1"
    order = {}
    for row in rows[2:]:
        method, vid = row.split("\t")[:2]
        order.setdefault(method, []).append(vid)
    assert order["omp"] == order["tsc"] == order["nn"]
    for m in ("omp", "tsc", "nn"):
        assert (tmp_path / f"confusion_{m}_AMF.csv").exists()
    assert "accuracy" in capsys.readouterr().out


def test_eval_rejects_dimension_mismatch(dictionary, tiny_dataset, tmp_path, capsys):
    man = str(tiny_dataset / "manifest.csv")
    assert main(["extract", "--manifest", man, "--out", str(tmp_path / "mf"), "--pipeline-features", "MF", *FAST]) == 0
    argv = ["eval", "--store", str(tmp_path / "mf"), "--dictionary", str(dictionary), "--out", str(tmp_path / "r")]
    assert main(argv + FAST) == 2
    assert "different features" in capsys.readouterr().err
    model = pl.load_model(dictionary)
    cov, logs = pl.load_store(tmp_path / "mf")
    test_ids = sorted({c.video_id for c in cov.records if c.group == "g1"})
    for method in ("omp", "tsc"):
        with pytest.raises(ValueError, match="does not match"):
            pl.evaluate_model(model, cov.records, logs.records, test_ids, load_config(), methods=[method])


def test_eval_split_hygiene(store, dictionary, tmp_path, capsys):
    # the dictionary holds g0, so evaluating on g0 must be refused
    argv = ["eval", "--store", str(store), "--dictionary", str(dictionary), "--out", str(tmp_path)]
    assert main(argv + ["--pipeline-clip-length", "6", "--split-test-groups", "g0"]) == 2
    assert "both train and test" in capsys.readouterr().err
    assert not (tmp_path / "report.jsonl").exists()


def test_empty_test_split_is_an_error(store, dictionary):
    model = pl.load_model(dictionary)
    cov, logs = pl.load_store(store)
    with pytest.raises(ValueError, match="test split is empty"):
        pl.evaluate_model(model, cov.records, logs.records, [], load_config())


def test_ablation_grid(store, tiny_dataset, tmp_path):
    argv = ["ablate", "--store", str(store), "--masks", "AF,MF,AMF", "--methods", "omp,tsc"]
    argv += ["--manifest", str(tiny_dataset / "manifest.csv"), "--out", str(tmp_path), *FAST]
    assert main(argv) == 0
    lines = (tmp_path / "ablation.jsonl").read_text().splitlines()[1:]
    cells = [(json.loads(l)["features"], json.loads(l)["method"]) for l in lines]
    assert cells == [(f, m) for f in ("AF", "MF", "AMF") for m in ("omp", "tsc")]
    grid = (tmp_path / "ablation.txt").read_text().splitlines()
    assert grid[0].split() == ["features", "omp", "tsc"] and len(grid) == 4


def test_ablation_needs_features_in_store(store):
    cov, _ = pl.load_store(store)
    with pytest.raises(ValueError, match="lacks features"):
        pl.run_ablation(cov.records, cov.features, ["gesture"], ["nn"], load_config(None, {"split.test_groups": "g1"}))


def test_union_mask_restriction_matches_direct_extraction(store, tiny_dataset):
    cov, _ = pl.load_store(store)
    cfg = load_config(None, {"pipeline.features": "MF", "pipeline.clip_length": "6"})
    direct = pl.extract_video(read_manifest(tiny_dataset / "manifest.csv").records[0], cfg)
    sub = pl.restrict(cov.records[: len(direct)], cov.features, cfg.feature_mask().names, cfg)
    for a, b in zip(direct, sub):
        np.testing.assert_allclose(a.matrix, b.matrix, rtol=1e-9, atol=1e-14)


def test_depth_masking(tmp_path):
    spec = SynthSpec(classes=("rotate",), videos_per_class=1, frames=6, width=24, height=20, depth=True)
    m = generate(spec, tmp_path)
    rec = m.records[0]
    assert read_frames(rec.depth).dtype == np.uint16
    full = pl.extract_video(rec, load_config(None, {"pipeline.features": "MF"}))
    masked = pl.extract_video(rec, load_config(None, {"pipeline.features": "MF", "pipeline.depth_threshold": "2000"}))
    assert 0 < masked[0].n < full[0].n


def test_grayscale_video_with_colour_features(tmp_path):
    from covact.dataset import VideoRecord
    from covact.io import write_pnm

    (tmp_path / "v").mkdir()
    for t in range(3):
        write_pnm(tmp_path / "v" / f"{t}.pgm", np.full((8, 8), 10 * t, np.uint8))
    rec = VideoRecord("v", "a", "g", tmp_path / "v", None, 3)
    with pytest.raises(ValueError, match="grayscale"):
        pl.extract_video(rec, load_config())
    assert len(pl.extract_video(rec, load_config(None, {"pipeline.features": "MF"}))) == 1


def test_missing_store_exit_code(tmp_path, capsys):
    assert main(["train", "--store", str(tmp_path / "none"), "--out", str(tmp_path / "d")]) == 2
    assert "covact train: error" in capsys.readouterr().err
