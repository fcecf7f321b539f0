import numpy as np
import pytest

from explainable_bpr.artifacts import (
    RunPaths,
    format_table,
    load_checkpoint,
    load_dataset,
    load_explainability,
    load_neighborhoods,
    load_propensity,
    load_split,
    read_json,
    require_artifact,
    save_checkpoint,
    save_dataset,
    save_explainability,
    save_neighborhoods,
    save_propensity,
    save_split,
    write_manifest,
    write_report,
)
from explainable_bpr.errors import DataError, UsageError
from explainable_bpr.experiment import summarize
from explainable_bpr.explainability import build_explainability, build_neighborhoods
from explainable_bpr.model import init_model
from explainable_bpr.propensity import build_propensity
from explainable_bpr.schemas import EvalReport


def test_missing_artifact_names_producer(tmp_path):
    with pytest.raises(UsageError) as info:
        require_artifact(tmp_path / "split.tsv", "split")
    assert info.value.code == "MISSING_ARTIFACT"
    assert "explainable-bpr split" in info.value.message


def test_dataset_and_split_reload(tmp_path, toy_split):
    save_dataset(toy_split.full, tmp_path)
    save_split(toy_split, tmp_path / "split.tsv")
    full = load_dataset(tmp_path)
    split = load_split(tmp_path / "split.tsv", full)
    assert full.user_ids == toy_split.full.user_ids
    np.testing.assert_array_equal(full.items, toy_split.full.items)
    np.testing.assert_array_equal(split.test_items, toy_split.test_items)
    np.testing.assert_array_equal(split.validation_negatives, toy_split.validation_negatives)
    np.testing.assert_array_equal(split.train.items, toy_split.train.items)


def test_split_must_match_dataset(tmp_path, toy_split, toy_dataset):
    save_split(toy_split, tmp_path / "split.tsv")
    smaller = toy_dataset.subset(toy_dataset.users < 5)
    with pytest.raises(DataError):
        load_split(tmp_path / "split.tsv", smaller)


def test_neighborhoods_explainability_propensity_reload(tmp_path, toy_dataset):
    neighborhoods = build_neighborhoods(toy_dataset, 3)
    E = build_explainability(toy_dataset, neighborhoods, source="evaluation")
    propensity = build_propensity(toy_dataset, neighborhoods, "neighbor_mean", 1e-4)
    save_neighborhoods(neighborhoods, tmp_path / "n.tsv")
    save_explainability(E, tmp_path / "e.tsv")
    save_propensity(propensity, tmp_path / "p.tsv")

    loaded = load_neighborhoods(tmp_path / "n.tsv")
    np.testing.assert_array_equal(loaded.indptr, neighborhoods.indptr)
    np.testing.assert_array_equal(loaded.similarities, neighborhoods.similarities)

    loaded_E = load_explainability(tmp_path / "e.tsv")
    assert loaded_E.source == "evaluation"
    np.testing.assert_array_equal(loaded_E.dense(), E.dense())

    loaded_p = load_propensity(tmp_path / "p.tsv")
    assert (loaded_p.variant, loaded_p.floor, loaded_p.eta) == ("neighbor_mean", 1e-4, 3)
    np.testing.assert_array_equal(
        loaded_p.neighborhood_propensity, propensity.neighborhood_propensity
    )


def test_explainability_file_holds_plain_numbers(tmp_path, toy_dataset):
    E = build_explainability(toy_dataset, build_neighborhoods(toy_dataset, 3))
    save_explainability(E, tmp_path / "e.tsv")
    assert "np." not in (tmp_path / "e.tsv").read_text()
    np.testing.assert_array_equal(load_explainability(tmp_path / "e.tsv").dense(), E.dense())


def test_non_numeric_explainability_row(tmp_path, toy_dataset):
    E = build_explainability(toy_dataset, build_neighborhoods(toy_dataset, 3))
    save_explainability(E, tmp_path / "e.tsv")
    with open(tmp_path / "e.tsv", "a", encoding="utf-8") as handle:
        handle.write("0\t1\tnp.float64(1.0)\n")
    with pytest.raises(DataError) as info:
        load_explainability(tmp_path / "e.tsv")
    assert info.value.code == "MALFORMED_ARTIFACT"


def test_checkpoint_reload(tmp_path):
    model = init_model(5, 7, 3, seed=12)
    model.loss = "UEBPR"
    save_checkpoint(model, tmp_path / "m.ckpt")
    loaded = load_checkpoint(tmp_path / "m.ckpt")
    np.testing.assert_array_equal(loaded.P, model.P)
    np.testing.assert_array_equal(loaded.Q, model.Q)
    assert (loaded.seed, loaded.loss) == (12, "UEBPR")


def test_truncated_checkpoint(tmp_path):
    path = tmp_path / "m.ckpt"
    save_checkpoint(init_model(2, 2, 2, seed=0), path)
    path.write_bytes(path.read_bytes()[:-4])
    with pytest.raises(DataError) as info:
        load_checkpoint(path)
    assert info.value.code == "MALFORMED_ARTIFACT"


def test_manifest_contents(tmp_path, toy_dataset):
    path = tmp_path / "manifest.json"
    write_manifest(path, "train", {"eta": 3}, {"seed": 1}, ds=toy_dataset, extra={"epochs": [4]})
    manifest = read_json(path, "train")
    assert manifest["command"] == "train"
    assert manifest["config"] == {"eta": 3}
    assert manifest["epochs"] == [4]
    assert len(manifest["dataset_hash"]) == 64
    assert "numpy" in manifest["versions"]


def test_report_files(tmp_path):
    reports = [EvalReport(loss="EBPR", seed=s, metrics={"hr": 0.5, "ndcg": 0.25}) for s in (0, 1)]
    text = write_report([summarize(reports, "EBPR")], tmp_path / "r.txt", tmp_path / "r.tsv")
    assert "0.5000±0.0000" in text
    rows = (tmp_path / "r.tsv").read_text().splitlines()
    assert rows[0].split("\t") == ["loss", "protocol", "cutoff", "seed", "metric", "value"]
    assert len(rows) == 1 + 4


def test_format_table_alignment():
    text = format_table(["a", "long"], [[1, 0.5]])
    assert text.splitlines() == ["a    long", "1  0.5000"]


def test_run_paths(tmp_path):
    paths = RunPaths(tmp_path / "run").ensure()
    assert paths.directory.is_dir()
    assert paths.checkpoint("EBPR", 2).name == "model_EBPR_r2.ckpt"
    assert paths.manifest("train", "BPR").name == "manifest_train_BPR.json"
    assert paths.explainability("training").name == "explainability_training.tsv"
    assert [p.name for p in paths.report("oracle")] == ["oracle.txt", "oracle.tsv"]
    assert paths.search("UBPR").name == "search_UBPR.json"
