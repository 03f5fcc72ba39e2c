"""End-to-end smoke tests for the python bindings."""

import json

import numpy as np
import pytest

import defdis


@pytest.fixture(scope="module")
def corpus():
    records, truth, grouping = defdis.synth_definitional(150, seed=9)
    return records, truth, grouping


@pytest.fixture(scope="module")
def trained(corpus):
    records, _, _ = corpus
    vocab = defdis.Vocab.build(records, min_freq=1)
    cfg = dict(
        variant="u",
        z_dim=3,
        hidden_dim=16,
        embed_dim=8,
        kl_weight=0.1,
        epochs=3,
        batch_size=16,
        dropout=0.0,
        learning_rate=3e-3,
        seed=4,
    )
    model, log = defdis.train(cfg, records, [], vocab=vocab)
    return model, log


def test_roles_and_groupings():
    names = defdis.role_names()
    assert len(names) == 13
    assert "SUPERTYPE" in names and "NONE" in names
    groupings = defdis.builtin_groupings()
    assert [len(g.factors) for g in groupings] == [7, 5, 4, 4]
    assert defdis.builtin_grouping("group3").name == "group3"


def test_corpus_io(tmp_path, corpus):
    records, truth, grouping = corpus
    path = tmp_path / "corpus.jsonl"
    defdis.save_jsonl(records, str(path))
    loaded = defdis.load_jsonl(str(path))
    assert len(loaded) == len(records)
    assert loaded[0].tokens == records[0].tokens
    assert loaded[0].roles == records[0].roles


def test_factor_matrix_reproduces_truth(corpus):
    records, truth, grouping = corpus
    m = defdis.factor_matrix(records, grouping)
    assert np.array_equal(m.values, truth.values)
    assert m.factor_names == truth.factor_names


def test_numerics_surface():
    a = np.array([[1.0, 0.0], [0.0, 1.0]])
    b = np.array([[3.0, 4.0], [5.0, 6.0]])
    assert np.allclose(defdis.matmul(a, b), b)
    assert defdis.gaussian_kl(np.zeros(4), np.zeros(4)) == 0.0
    assert defdis.softmax_cross_entropy(np.zeros((1, 4)), [2]) == pytest.approx(
        np.log(4.0)
    )
    z = defdis.reparameterize(np.zeros(3), np.zeros(3), np.array([1.0, -1.0, 0.5]))
    assert np.allclose(z, [1.0, -1.0, 0.5])


def test_train_represent_checkpoint(tmp_path, corpus, trained):
    records, _, _ = corpus
    model, log = trained
    assert len(log["epochs"]) == 3
    reps = model.represent(records)
    assert reps.shape == (len(records), 3)
    assert np.isfinite(reps).all()

    path = tmp_path / "model.bin"
    defdis.save_checkpoint(model, str(path))
    loaded = defdis.load_checkpoint(str(path))
    assert np.array_equal(loaded.represent(records), reps)


def test_metrics_on_oracle():
    rng = np.random.default_rng(7)
    n, k = 400, 3
    # Representations carry the first three presence factors plus noise.
    recs, truth, grouping = defdis.synth_definitional(n, seed=21)
    m = defdis.factor_matrix(recs, grouping)
    oracle = m.values[:, :k] + 0.05 * rng.standard_normal((n, k))
    cfg = dict(
        zdiff=dict(pairs=16, train_batches=150, test_batches=50),
        zminvar=dict(pairs=16, train_batches=150, test_batches=50),
        classifier_iters=150,
        min_samples=50,
        seed=3,
    )
    report = defdis.evaluate_all(oracle, m, cfg)
    # informative representation of the first three factors
    assert report["z_diff"] >= 0.6
    assert report["explicitness"] >= 0.8
    assert 0.0 <= report["mig"] <= 1.0
    assert report["config"]["seed"] == 3


def test_probes(trained, corpus):
    records, _, _ = corpus
    model, _ = trained
    trav = defdis.traverse(model, records[0], dim=0, low=-2, high=2, steps=5)
    assert len(trav["sentences"]) == 5
    interp = defdis.interpolate(model, records[0], records[1])
    assert len(interp["sentences"]) == 9

    z1 = np.asarray(trav["latents"][0]).ravel()
    avg = defdis.latent_arithmetic(z1, z1, "avg")
    assert np.allclose(avg.ravel(), z1)

    reps = model.represent(records)
    labels = [defdis.dominant_role(r) for r in records]
    plot = defdis.project2d(reps, labels)
    assert len(plot["x"]) == len(records)


def test_render_svg(tmp_path, trained, corpus):
    records, _, _ = corpus
    model, _ = trained
    reps = model.represent(records)
    labels = [defdis.dominant_role(r) for r in records]
    plot = defdis.project2d(reps, labels)
    path = tmp_path / "plot.svg"
    defdis.render_svg(plot, str(path))
    svg = path.read_text()
    assert svg.startswith("<svg")
    assert svg.count("<circle") == len(records)


def test_defmod(corpus):
    records, _, _ = corpus
    vocab = defdis.build_seeded_vocab(records, min_freq=1)
    cfg = dict(
        variant="u",
        z_dim=2,
        hidden_dim=16,
        embed_dim=8,
        epochs=2,
        batch_size=16,
        dropout=0.0,
        learning_rate=3e-3,
        seed=6,
    )
    model, _ = defdis.train_seeded(cfg, records, [], vocab=vocab)
    tokens = defdis.generate_definition(model, "swan", max_len=8, seed=1)
    assert len(tokens) <= 8
    assert all(t not in ("<pad>", "<bos>") for t in tokens)
    again = defdis.generate_definition(model, "swan", max_len=8, seed=1)
    assert tokens == again

    pp = defdis.perplexity(model, defdis.seeded_records(records))
    assert pp > 0
    assert defdis.bleu([["a", "bird"]], [["a", "bird"]]) == pytest.approx(1.0)


def test_cli_roundtrip(tmp_path):
    out = tmp_path / "run"
    cfg = {
        "corpus": str(out / "corpus.jsonl"),
        "grouping": "group3",
        "out": str(out),
        "seed": 2,
        "min_freq": 1,
        "split": {"fractions": [1.0, 0.0, 0.0]},
        "vae": {
            "variant": "u",
            "z_dim": 2,
            "hidden_dim": 10,
            "embed_dim": 6,
            "epochs": 1,
            "batch_size": 16,
            "dropout": 0.0,
            "learning_rate": 0.003,
            "seed": 0,
        },
        "synth": {"builtin": "definitional", "count": 60},
    }
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(cfg))
    assert defdis.run_cli(["synth", "--config", str(cfg_path)]) == 0
    assert defdis.run_cli(["train", "--config", str(cfg_path)]) == 0
    assert (out / "checkpoint.bin").exists()
    assert (out / "train.manifest.json").exists()
    assert defdis.run_cli([]) == 2


def test_error_mapping():
    with pytest.raises(ValueError):
        defdis.Record("w", ["a"], ["NOT_A_ROLE"])
    with pytest.raises(ValueError):
        defdis.bleu([["a"]], [])
