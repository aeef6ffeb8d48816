import json

import numpy as np
import pytest

import hrtfspace as hs
from hrtfspace.cli import main
from hrtfspace.containers import load_manifest


def run(args):
    return main([str(a) for a in args])


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("data")
    code = run(["--seed", 3, "gen-data", "--n-subjects", 15, "--grid", "8x3",
                "--bins", 12, "--out", out])
    assert code == 0
    return out


def test_gen_data_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(["--seed", 5, "gen-data", "--n-subjects", 4, "--grid", "6x3", "--bins", 8, "--out", a]) == 0
    assert run(["--seed", 5, "gen-data", "--n-subjects", 4, "--grid", "6x3", "--bins", 8, "--out", b]) == 0
    files_a = sorted(p.name for p in a.iterdir())
    assert sorted(p.name for p in b.iterdir()) == files_a
    for name in files_a:
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_gen_data_split_and_validity(dataset):
    manifest = load_manifest(dataset / "manifest.json")
    assert len(manifest.split["train"]) == 12
    assert len(manifest.split["test"]) == 3
    for sid, _ in manifest.subjects:
        subject = hs.read_htf(manifest.resolve(sid, dataset))
        assert subject.subject_id == sid
        assert subject.grid.count == 24


def test_gen_data_requires_seed(tmp_path):
    assert run(["gen-data", "--n-subjects", 4, "--out", tmp_path / "x"]) == 2


def test_metrics_idempotent_and_correct(dataset, tmp_path):
    csv1 = tmp_path / "m1.csv"
    csv2 = tmp_path / "m2.csv"
    assert run(["metrics", "--manifest", dataset / "manifest.json", "--metric", "pbc", "--out", csv1]) == 0
    assert run(["metrics", "--manifest", dataset / "manifest.json", "--metric", "pbc", "--out", csv2]) == 0
    assert csv1.read_bytes() == csv2.read_bytes()

    matrix = hs.load_matrix(csv1)
    manifest = load_manifest(dataset / "manifest.json")
    assert matrix.subject_ids == manifest.split["train"]
    sets = {sid: hs.read_htf(manifest.resolve(sid, dataset)) for sid in matrix.subject_ids}
    tables = hs.LoudnessTables.for_bins(
        sets[matrix.subject_ids[0]].freq_bins_hz.astype(np.float64)
    )
    i, j = 0, 3
    expected = hs.pbc(sets[matrix.subject_ids[i]], sets[matrix.subject_ids[j]], tables)
    assert matrix.values[i, j] == expected


def test_full_pipeline_smoke(dataset, tmp_path):
    manifest = dataset / "manifest.json"
    matrix_csv = tmp_path / "pbc.csv"
    full_csv = tmp_path / "pbc_full.csv"
    mmds_csv = tmp_path / "mmds.csv"
    base_ckpt = tmp_path / "base.phck"
    prop_ckpt = tmp_path / "prop.phck"
    report = tmp_path / "eval.json"
    select_out = tmp_path / "select.json"

    assert run(["metrics", "--manifest", manifest, "--metric", "pbc", "--out", matrix_csv]) == 0
    assert run(["metrics", "--manifest", manifest, "--metric", "pbc", "--include-test", "--out", full_csv]) == 0
    assert run(["mmds", "--matrix", matrix_csv, "--dim", 4, "--out", mmds_csv]) == 0

    common = ["--manifest", manifest, "--latent-dim", 4, "--epochs", 8,
              "--hidden-units", 16, "--num-octaves", 2, "--lr-weights", "1e-3"]
    assert run(["--seed", 1, "train", *common, "--loss-flags", "", "--out", base_ckpt]) == 0
    assert run(["--seed", 1, "train", *common, "--loss-flags", "align,pbc",
                "--mmds", mmds_csv, "--out", prop_ckpt]) == 0

    assert run(["eval", "--checkpoint", base_ckpt, "--checkpoint", prop_ckpt,
                "--manifest", manifest, "--matrix", full_csv,
                "--invert-steps", 40, "--out", report]) == 0
    doc = json.loads(report.read_text())
    models = doc["models"]
    assert len(models) == 2
    for entry in models.values():
        corr = entry["correlation"]["pbc"]
        assert {"train_gt", "train_reconstructed", "test_gt", "test_reconstructed"} <= set(corr)
        assert -1.0 <= corr["train_gt"]["mean"] <= 1.0
        assert "train" in entry["reconstruction"] and "test" in entry["reconstruction"]

    assert run(["select", "--checkpoint", prop_ckpt, "--manifest", manifest,
                "-k", 5, "--invert-steps", 40, "--out", select_out]) == 0
    sel = json.loads(select_out.read_text())
    assert sel["best"]["metric_mean"] >= 0
    assert len(sel["per_subject"]) == 3
    assert all(len(r["selected"]) == 5 for r in sel["per_subject"])


def test_invert_command(dataset, tmp_path):
    manifest = load_manifest(dataset / "manifest.json")
    ckpt = tmp_path / "m.phck"
    assert run(["--seed", 2, "train", "--manifest", dataset / "manifest.json",
                "--latent-dim", 3, "--epochs", 5, "--hidden-units", 8,
                "--num-octaves", 1, "--loss-flags", "", "--out", ckpt]) == 0
    test_id = manifest.split["test"][0]
    out = tmp_path / "z.json"
    assert run(["--seed", 2, "invert", "--checkpoint", ckpt,
                "--subject", manifest.resolve(test_id, dataset),
                "--steps", 30, "--out", out]) == 0
    doc = json.loads(out.read_text())
    assert len(doc["latent"]) == 3
    assert doc["reconstruction_l2"] >= 0


def test_exit_codes(tmp_path, dataset):
    # validation error: bad config key
    bad_cfg = tmp_path / "cfg.json"
    bad_cfg.write_text('{"nope": 1}')
    assert run(["--config", bad_cfg, "--seed", 1, "gen-data", "--out", tmp_path / "d"]) == 2
    # i/o error: missing manifest
    assert run(["metrics", "--manifest", tmp_path / "missing.json", "--out", tmp_path / "m.csv"]) == 4
    # numerical failure: divergent training
    assert run(["--seed", 1, "train", "--manifest", dataset / "manifest.json",
                "--latent-dim", 3, "--epochs", 3, "--hidden-units", 8,
                "--num-octaves", 1, "--loss-flags", "", "--lr-weights", "1e6",
                "--out", tmp_path / "d.phck"]) == 3


def test_config_file_supplies_defaults(dataset, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"seed": 9, "metric": "aep", "mmds_dim": 3}))
    out_csv = tmp_path / "aep.csv"
    assert run(["--config", cfg, "metrics", "--manifest", dataset / "manifest.json",
                "--out", out_csv]) == 0
    assert hs.load_matrix(out_csv).metric_name == "aep-proxy"
    emb_csv = tmp_path / "e.csv"
    assert run(["--config", cfg, "mmds", "--matrix", out_csv, "--out", emb_csv]) == 0
    from hrtfspace.mmds import load_embedding

    assert load_embedding(emb_csv).dim == 3


def test_artifacts_sidecars_written(dataset):
    assert (dataset / "artifacts-gen-data.json").is_file()
    doc = json.loads((dataset / "artifacts-gen-data.json").read_text())
    assert doc["command"] == "gen-data"
    assert doc["seed"] == 3
    assert any(p.endswith("manifest.json") for p in doc["outputs"])
