import json
import math

import numpy as np
import pytest

from structsum import model, trainer
from structsum.corpus import CorpusSplit, Example


def tiny_hp():
    return model.Hyperparams(vocab_size=20, emb_dim=8, hidden_dim=8,
                             enc_layers=2, dec_layers=2, dropout=0.0,
                             max_token_positions=12, max_sentence_positions=6,
                             max_source_positions=30, topic_count=4,
                             mode="structured+topic")


def tiny_split(n=6, seed=0):
    rng = np.random.default_rng(seed)
    exs = []
    for _ in range(n):
        sents = [list(rng.integers(7, 20, size=4)) for _ in range(2)]
        exs.append(Example(title=["t"],
                           source=list(rng.integers(7, 20, size=10)),
                           sentences=sents,
                           topics=list(rng.integers(0, 3, 2)) + [3]))
    return CorpusSplit(train=exs[:-2], valid=exs[-2:])


class TestClip:
    def test_norm_below_threshold_untouched(self):
        g = {"a": np.array([0.3, 0.4])}  # norm 0.5
        total = trainer.clip_gradients(g, 1.0)
        assert total == pytest.approx(0.5)
        np.testing.assert_allclose(g["a"], [0.3, 0.4])

    def test_global_norm_scaled_to_threshold(self):
        g = {"a": np.array([3.0, 0.0]), "b": np.array([4.0])}  # norm 5
        trainer.clip_gradients(g, 0.1)
        total = math.sqrt(sum(float((v * v).sum()) for v in g.values()))
        assert total == pytest.approx(0.1, rel=1e-6)
        # direction preserved
        np.testing.assert_allclose(g["a"] / g["b"][0], [0.75, 0.0])


class TestBatches:
    def test_buckets_by_source_length(self):
        exs = [Example(title=[], source=[7] * n, sentences=[[7]])
               for n in (5, 1, 3, 2)]
        batches = trainer.make_batches(exs, 2)
        assert batches == [[1, 3], [2, 0]]

    def test_all_examples_covered_once(self):
        exs = tiny_split(7).train
        seen = [i for b in trainer.make_batches(exs, 3) for i in b]
        assert sorted(seen) == list(range(len(exs)))


class TestTraining:
    def test_loss_decreases(self):
        hp = tiny_hp()
        split = tiny_split()
        params = model.init_params(hp, seed=1)
        cfg = trainer.TrainConfig(lr=0.05, max_epochs=8, batch_size=4,
                                  dev_decode=False, eval_every=100)
        result = trainer.train(params, hp, split, cfg)
        losses = [r["train_loss"] for r in result.history]
        assert losses[-1] < losses[0]

    def test_same_seed_same_trajectory(self):
        hp = tiny_hp()
        cfg = trainer.TrainConfig(lr=0.05, max_epochs=3, batch_size=4,
                                  dev_decode=False, seed=7)
        r1 = trainer.train(model.init_params(hp, seed=1), hp, tiny_split(),
                           cfg)
        r2 = trainer.train(model.init_params(hp, seed=1), hp, tiny_split(),
                           cfg)
        assert [r["train_loss"] for r in r1.history] == \
            [r["train_loss"] for r in r2.history]
        for k in r1.best_params:
            np.testing.assert_array_equal(r1.best_params[k],
                                          r2.best_params[k])

    def test_log_and_checkpoint_written(self, tmp_path):
        hp = tiny_hp()
        log = tmp_path / "train.log"
        ckpt = tmp_path / "best.bin"
        cfg = trainer.TrainConfig(lr=0.05, max_epochs=2, batch_size=4,
                                  dev_decode=False)
        trainer.train(model.init_params(hp, seed=1), hp, tiny_split(), cfg,
                      log_path=str(log), checkpoint_path=str(ckpt))
        records = [json.loads(l) for l in log.read_text().splitlines()]
        assert len(records) == 2
        assert all("train_loss" in r and "lr" in r for r in records)
        params, hp2, header = model.load_checkpoint(str(ckpt))
        assert hp2 == hp
        assert "dev" in header["extra"]

    def test_checkpoint_restores_exact_dev_loss(self, tmp_path):
        hp = tiny_hp()
        split = tiny_split()
        ckpt = str(tmp_path / "best.bin")
        cfg = trainer.TrainConfig(lr=0.05, max_epochs=3, batch_size=4,
                                  dev_decode=False)
        result = trainer.train(model.init_params(hp, seed=1), hp, split, cfg,
                               checkpoint_path=ckpt)
        loaded, _, _ = model.load_checkpoint(ckpt)
        dev = trainer.evaluate_dev(loaded, hp, split.valid, decode=False)
        assert dev["loss"] == pytest.approx(result.best_dev["loss"], abs=0)

    def test_nan_loss_aborts_with_diagnostics(self):
        hp = tiny_hp()
        params = model.init_params(hp, seed=1)
        params["w_y"][:] = np.inf
        cfg = trainer.TrainConfig(max_epochs=1, dev_decode=False)
        with pytest.raises(trainer.NumericError) as err, \
                np.errstate(invalid="ignore"):
            trainer.train(params, hp, tiny_split(), cfg)
        payload = json.loads(str(err.value))
        assert payload["epoch"] == 0 and "grad_norms" in payload

    def test_stop_loss_halts_early(self):
        hp = tiny_hp()
        cfg = trainer.TrainConfig(lr=0.05, max_epochs=50, batch_size=4,
                                  dev_decode=False, eval_every=100,
                                  stop_loss=100.0)
        result = trainer.train(model.init_params(hp, seed=1), hp,
                               tiny_split(), cfg)
        assert len(result.history) == 1

    def test_rejects_bad_config(self):
        with pytest.raises(ValueError):
            trainer.TrainConfig(lr=0.0)
