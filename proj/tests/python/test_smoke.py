"""Smoke tests for the python bindings."""

import math

import numpy as np
import pytest

import ucf_forge


def test_auc_worked_example():
    assert ucf_forge.auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == pytest.approx(0.75)


def test_auc_rejects_single_class():
    with pytest.raises(Exception):
        ucf_forge.auc([0.1, 0.2], [1, 1])


def test_adain_hand_case():
    # mu(c)=2, sigma(c)=1, mu(f)=2, sigma(f)=2 -> 2*(c-2)/1 + 2
    content = np.array([1.0, 3.0], dtype=np.float32).reshape(1, 1, 1, 2)
    style = np.array([0.0, 4.0], dtype=np.float32).reshape(1, 1, 1, 2)
    out = ucf_forge.adain(content, style)
    assert out.shape == (1, 1, 1, 2)
    assert out.reshape(-1) == pytest.approx([0.0, 4.0], abs=1e-4)


def test_adain_matches_fingerprint_statistics():
    rng = np.random.default_rng(0)
    content = rng.normal(size=(2, 3, 8, 8)).astype(np.float32)
    style = rng.normal(size=(2, 3, 8, 8)).astype(np.float32)
    out = ucf_forge.adain(content, style)
    np.testing.assert_allclose(
        out.mean(axis=(2, 3)), style.mean(axis=(2, 3)), atol=1e-4
    )
    np.testing.assert_allclose(out.std(axis=(2, 3)), style.std(axis=(2, 3)), atol=1e-4)


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("corpus")
    spec = {
        "n_real": 16,
        "methods": "A,B",
        "n_per_method": 8,
        "image_size": 16,
        "held_out_methods": "B",
        "seed": 11,
    }
    info = ucf_forge.gen_data(spec, str(out))
    assert info["n_samples"] == 32
    return str(out)


def test_scan_roundtrip(corpus):
    scanned = ucf_forge.scan_dataset(corpus)
    assert scanned["n_samples"] == 32
    assert scanned["vocabulary"] == ["real", "A", "B"]


@pytest.fixture(scope="module")
def trained(corpus, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    config = {
        "input_size": 16,
        "width": 0.2,
        "fingerprint_channels": 8,
        "content_channels": 8,
        "batch_pairs": 2,
        "steps": 4,
        "seed": 3,
        "augment": "false",
    }
    result = ucf_forge.train(config, corpus, str(out))
    assert result["steps"] == 4
    assert math.isfinite(result["final"]["total"])
    return result["checkpoint"]


def test_evaluate_and_probes(corpus, trained):
    report = ucf_forge.evaluate(trained, corpus, probes=["common", "specific"])
    assert 0.0 <= report["auc_common"] <= 1.0
    assert 0.0 <= report["probe_common"] <= 1.0
    assert 0.0 <= report["probe_specific"] <= 1.0


def test_detect_scores(corpus, trained):
    rng = np.random.default_rng(1)
    images = rng.random((4, 3, 16, 16), dtype=np.float32)
    scores = ucf_forge.detect(trained, images)
    assert scores.shape == (4,)
    assert np.all((scores >= 0) & (scores <= 1))
    np.testing.assert_array_equal(scores, ucf_forge.detect(trained, images))


def test_export_features(corpus, trained, tmp_path):
    out = tmp_path / "features.tsv"
    ucf_forge.export_features(trained, corpus, "test", str(out))
    lines = out.read_text().strip().splitlines()
    header = lines[0].split("\t")
    assert header[:3] == ["sample_id", "y", "y_prime"]
    scanned = ucf_forge.scan_dataset(corpus)
    n_test = sum(1 for s in scanned["sample_ids"] if s.startswith("test/"))
    assert len(lines) - 1 == n_test
