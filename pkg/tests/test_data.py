import csv
import json
import os

import numpy as np
import pytest

from nagg.data import (SBM_STD, DatasetBundle, SbmSpec, export_embeddings, generate_sbm,
                       load_dataset, load_splits, make_splits, save_dataset, write_loss_csv,
                       write_metrics_json)
from nagg.errors import DataFormatError
from nagg.trainer import EpochLog, Metrics

TOY = os.path.join(os.path.dirname(__file__), "fixtures", "toy2")


def write_dir(path, edges="0\t1\n", features="1,2\n3,4\n", labels="0\t0\n1\t1\n", meta=None):
    os.makedirs(path, exist_ok=True)
    for name, text in (("edges.tsv", edges), ("features.csv", features), ("labels.tsv", labels)):
        with open(os.path.join(path, name), "w") as fh:
            fh.write(text)
    if meta is not None:
        with open(os.path.join(path, "meta.json"), "w") as fh:
            json.dump(meta, fh)
    return str(path)


def test_load_toy_fixture():
    b = load_dataset(TOY)
    assert (b.num_nodes, b.feature_dim, b.num_classes) == (2, 2, 2)
    assert len(b.undirected_edges()) == 1
    assert b.graph.scheme.value == "binary" and b.graph.has_self_loops
    assert b.name == "toy2"


def test_label_out_of_range_names_line(tmp_path):
    path = write_dir(tmp_path / "d", labels="0\t0\n1\t9\n", meta={"num_classes": 7})
    with pytest.raises(DataFormatError, match=r"labels.tsv:2"):
        load_dataset(path)


def test_ragged_features_name_line(tmp_path):
    path = write_dir(tmp_path / "d", features="1,2\n3\n")
    with pytest.raises(DataFormatError, match=r"features.csv:2"):
        load_dataset(path)


def test_bad_edge_line_names_line(tmp_path):
    path = write_dir(tmp_path / "d", edges="0\t1\nzero\tone\n")
    with pytest.raises(DataFormatError, match=r"edges.tsv:2"):
        load_dataset(path)


def test_missing_file(tmp_path):
    path = write_dir(tmp_path / "d")
    os.remove(os.path.join(path, "labels.tsv"))
    with pytest.raises(FileNotFoundError, match="labels.tsv"):
        load_dataset(path)


def test_sbm_degenerate_probabilities():
    b = generate_sbm(SbmSpec(blocks=2, nodes_per_block=5, p_in=1.0, p_out=0.0, feature_dim=2), 0)
    dense = b.graph.to_dense()
    same = b.labels[:, None] == b.labels[None, :]
    np.testing.assert_array_equal(dense > 0, same)


def test_sbm_zero_noise_gives_class_means():
    spec = SbmSpec(blocks=3, nodes_per_block=4, feature_dim=5, feature_shift=2.5, noise_sigma=0.0)
    b = generate_sbm(spec, 1)
    expected = np.zeros((12, 5))
    expected[np.arange(12), b.labels] = 2.5
    np.testing.assert_array_equal(b.features, expected)


def test_sbm_std_edge_count_within_binomial_band():
    b = generate_sbm(SBM_STD, 0)
    pairs = b.undirected_edges()
    same = b.labels[pairs[:, 0]] == b.labels[pairs[:, 1]]
    n_pairs = 4 * 100 * 99 // 2
    mean = n_pairs * 0.05
    sd = np.sqrt(n_pairs * 0.05 * 0.95)
    assert mean == pytest.approx(990)
    assert abs(same.sum() - mean) < 5 * sd
    assert b.raw_edge_count == len(pairs)


def test_sbm_labels_uniform_and_deterministic():
    a, b = generate_sbm(SBM_STD, 3), generate_sbm(SBM_STD, 3)
    assert np.bincount(a.labels).tolist() == [100] * 4
    np.testing.assert_array_equal(a.features, b.features)
    np.testing.assert_array_equal(a.graph.col_indices, b.graph.col_indices)


def test_sbm_spec_validation():
    with pytest.raises(ValueError):
        SbmSpec(p_in=0.1, p_out=0.2)
    with pytest.raises(ValueError):
        SbmSpec(feature_shift=0.0)


def test_splits_cora_shape():
    labels = np.repeat(np.arange(7), 400)
    s = make_splits(labels, 20, 500, 1000, seed=0)
    assert s.train_idx.size == 140
    assert np.bincount(labels[s.train_idx]).tolist() == [20] * 7
    assert (s.val_idx.size, s.test_idx.size) == (500, 1000)
    all_idx = np.concatenate([s.train_idx, s.val_idx, s.test_idx])
    assert np.unique(all_idx).size == all_idx.size


def test_splits_reproducible_and_seed_sensitive():
    labels = np.repeat(np.arange(4), 100)
    a, b, c = (make_splits(labels, 20, 100, 200, seed=s) for s in (1, 1, 2))
    np.testing.assert_array_equal(a.test_idx, b.test_idx)
    assert not np.array_equal(a.train_idx, c.train_idx)


def test_splits_insufficient_nodes_names_class():
    with pytest.raises(ValueError, match="class 1"):
        make_splits(np.array([0, 0, 0, 1]), 2, 0, 0, seed=0)


def test_roundtrip_generated_bundle(tmp_path):
    b = generate_sbm(SbmSpec(blocks=2, nodes_per_block=10, p_in=0.4, p_out=0.05, feature_dim=3), 0)
    split = make_splits(b.labels, 3, 4, 4, seed=0)
    save_dataset(b, tmp_path / "ds", split)
    back = load_dataset(str(tmp_path / "ds"))
    np.testing.assert_array_equal(back.undirected_edges(), b.undirected_edges())
    np.testing.assert_allclose(back.features, b.features, atol=1e-12, rtol=0)
    np.testing.assert_array_equal(back.labels, b.labels)
    assert back.num_classes == 2
    s2 = load_splits(str(tmp_path / "ds" / "splits.json"))
    np.testing.assert_array_equal(s2.val_idx, split.val_idx)


def test_bundle_validation():
    b = load_dataset(TOY)
    with pytest.raises(ValueError):
        DatasetBundle(b.graph, np.ones((3, 2)), b.labels, 2)
    with pytest.raises(ValueError):
        DatasetBundle(b.graph, b.features, np.array([0, 5]), 2)


def test_export_embeddings_shape(tmp_path):
    path = tmp_path / "emb.csv"
    export_embeddings(np.array([[1.0, 2.0], [3.0, 4.5]]), path)
    lines = path.read_text().splitlines()
    assert len(lines) == 2 and all(len(line.split(",")) == 2 for line in lines)


def test_empty_loss_csv_is_header_only(tmp_path):
    path = tmp_path / "loss.csv"
    write_loss_csv([], path)
    assert path.read_text() == "epoch,train_loss,val_loss,val_acc,agg_param\n"


def test_loss_csv_rows(tmp_path):
    path = tmp_path / "loss.csv"
    write_loss_csv([EpochLog(1, 1.5, 1.25, 0.5, (2.0, None))], path)
    rows = list(csv.reader(path.open()))
    assert rows[1] == ["1", "1.5", "1.25", "0.5", "2.0;"]


def test_metrics_json_roundtrip(tmp_path):
    m = Metrics(0.9, 12, 0.88, 112, 0.31, [2.0, 1.5], wall_time_s=3.2)
    path = tmp_path / "metrics.json"
    write_metrics_json(m, path)
    doc = json.loads(path.read_text())
    assert Metrics(**doc) == m
    assert "wall_time_s" not in doc
