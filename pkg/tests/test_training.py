import numpy as np
import pytest

from idsf import autodiff as ad
from idsf.autodiff import Tensor
from idsf.data import DataError
from idsf.model import joint_loss
from idsf.synthetic import generate_corpus
from idsf.training import (
    DEFAULT_LAMBDAS,
    DEFAULT_LEARNING_RATES,
    AdamState,
    GridSpec,
    TrainConfig,
    adamw_step,
    clip_grad_norm,
    grid_search,
    multi_seed,
    summarize_runs,
    train,
)

from conftest import synthetic_model, tiny_model


@pytest.fixture(scope="module")
def corpus():
    return generate_corpus(20, 8, 8, seed=0)


class TestJointLoss:
    def test_value(self):
        assert joint_loss(Tensor(2.0), Tensor(4.0), 0.5).item() == 3.0

    @pytest.mark.parametrize("lam", [0.0, 1.0, -0.1, 1.5])
    def test_out_of_range(self, lam):
        with pytest.raises(ValueError, match=r"lambda must be in \(0,1\)"):
            joint_loss(Tensor(1.0), Tensor(1.0), lam)

    def test_gradient_split(self, tiny_batch):
        model = tiny_model()
        lam = 0.3
        out = model.loss(tiny_batch, lam)
        ad.backward(out.loss)
        total = {k: p.grad.copy() for k, p in model.named_parameters().items()}
        parts = []
        for which in ("intent_loss", "slot_loss"):
            ad.zero_grad(model.parameters())
            o = model.loss(tiny_batch, lam)
            ad.backward(getattr(o, which))
            parts.append({k: (np.zeros_like(p.data) if p.grad is None else p.grad.copy())
                          for k, p in model.named_parameters().items()})
        for k in total:
            np.testing.assert_allclose(total[k], lam * parts[0][k] + (1 - lam) * parts[1][k], atol=1e-12)
        ad.zero_grad(model.parameters())
        err = ad.grad_check(lambda: model.loss(tiny_batch, lam).loss, model.parameter_groups()["intent"])
        assert err < 1e-6


class TestAdamW:
    def test_zero_grad_no_decay(self):
        p = np.array([1.0, -2.0])
        adamw_step([p], [np.zeros(2)], AdamState.for_params([p]), lr=0.1)
        assert p.tolist() == [1.0, -2.0]

    def test_first_step_moves_by_lr(self):
        p = np.array([1.0])
        adamw_step([p], [np.array([1.0])], AdamState.for_params([p]), lr=0.1)
        assert p[0] == pytest.approx(0.9, abs=1e-6)

    def test_decoupled_decay(self):
        p = np.array([1.0])
        adamw_step([p], [np.array([0.0])], AdamState.for_params([p]), lr=0.1, weight_decay=0.1)
        assert p[0] == pytest.approx(0.99, abs=1e-15)

    def test_state_shape_mismatch(self):
        p = np.zeros(3)
        with pytest.raises(ValueError):
            adamw_step([p], [np.zeros(3)], AdamState.for_params([np.zeros(2)]), lr=0.1)

    def test_clip(self):
        a = Tensor(np.zeros(2), requires_grad=True)
        a.grad = np.array([3.0, 4.0])
        assert clip_grad_norm([a], 1.0) == 5.0
        np.testing.assert_allclose(a.grad, [0.6, 0.8], atol=1e-12)


class TestConfig:
    def test_defaults(self):
        cfg = TrainConfig()
        assert (cfg.batch_size, cfg.epochs, cfg.weight_decay) == (32, 50, 0.01)
        assert cfg.adam_betas == (0.9, 0.999) and cfg.adam_eps == 1e-8

    def test_rejects(self):
        with pytest.raises(ValueError):
            TrainConfig(lam=0.0)
        with pytest.raises(ValueError):
            TrainConfig(batch_size=0)

    def test_default_grid(self):
        assert DEFAULT_LEARNING_RATES == (1e-5, 2e-5, 3e-5, 4e-5, 5e-5)
        assert len(DEFAULT_LAMBDAS) == 19 and DEFAULT_LAMBDAS[0] == 0.05 and DEFAULT_LAMBDAS[-1] == 0.95
        assert len(GridSpec().cells()) == 95
        with pytest.raises(ValueError):
            GridSpec([1e-5], [1.0])


def test_every_parameter_gets_gradient(tiny_batch):
    for variant in ("full", "cls_context", "scaled_slot", "concat_cls", "baseline"):
        model = tiny_model(variant)
        ad.backward(model.loss(tiny_batch, 0.5).loss)
        for name, p in model.named_parameters().items():
            assert p.grad is not None and np.any(p.grad != 0), f"{variant}: {name}"


class TestTrain:
    def test_deterministic(self, corpus):
        cfg = TrainConfig(learning_rate=1e-3, epochs=2, batch_size=8, seed=3)
        logs = []
        for _ in range(2):
            m = synthetic_model(corpus, seed=3, dropout=0.1)
            run = train(m, corpus.train, corpus.valid, cfg)
            logs.append(([r.train_loss for r in run.log], m.state_dict()))
        assert logs[0][0] == logs[1][0]
        for k in logs[0][1]:
            assert np.array_equal(logs[0][1][k], logs[1][1][k])

    def test_descent_at_default_lr(self):
        splits = generate_corpus(50, 20, 20, seed=0)
        m = synthetic_model(splits, seed=1)
        run = train(m, splits.train, splits.valid, TrainConfig(epochs=2, seed=1))
        assert run.log[1].train_loss < run.log[0].train_loss

    def test_best_checkpoint_is_loaded(self, corpus):
        m = synthetic_model(corpus, seed=0)
        run = train(m, corpus.train, corpus.valid, TrainConfig(learning_rate=1e-3, epochs=3, batch_size=8))
        scores = [r.avg_score for r in run.log]
        assert run.best.epoch == scores.index(max(scores))
        assert run.best.avg_score == pytest.approx((run.best.intent_accuracy + run.best.slot_f1) / 2)
        for k, v in m.state_dict().items():
            assert np.array_equal(v, run.best.weights[k])

    def test_empty_train(self, corpus):
        with pytest.raises(DataError):
            train(synthetic_model(corpus), [], corpus.valid, TrainConfig(epochs=1))


class TestGrid:
    def test_one_cell(self, corpus):
        base = TrainConfig(epochs=2, batch_size=8, seed=2)
        (cell,) = grid_search(lambda s: synthetic_model(corpus, seed=s), GridSpec([1e-3], [0.4]),
                              corpus.train, corpus.valid, base)
        run = train(synthetic_model(corpus, seed=2), corpus.train, corpus.valid,
                    TrainConfig(epochs=2, batch_size=8, seed=2, learning_rate=1e-3, lam=0.4))
        assert cell.avg_score == run.best.avg_score and cell.best_epoch == run.best.epoch

    def test_two_by_two_sorted_and_resumable(self, corpus, tmp_path):
        base = TrainConfig(epochs=1, batch_size=8)
        status = tmp_path / "status.tsv"
        grids = GridSpec([1e-3, 1e-4], [0.3, 0.7])
        first = grid_search(lambda s: synthetic_model(corpus, seed=s), grids, corpus.train, corpus.valid,
                            base, status)
        assert len(first) == 4
        assert [r.avg_score for r in first] == sorted((r.avg_score for r in first), reverse=True)

        def fail(seed):
            raise AssertionError("finished cells must not be retrained")

        again = grid_search(fail, grids, corpus.train, corpus.valid, base, status)
        assert again == first


class TestMultiSeed:
    def test_summary_arithmetic(self):
        mean, std = summarize_runs([{"m": 90.0}, {"m": 100.0}], ["m"])
        assert mean["m"] == 95.0
        assert std["m"] == pytest.approx(np.sqrt(50.0))

    def test_identical_seeds_zero_std(self, corpus):
        cfg = TrainConfig(learning_rate=1e-3, epochs=1, batch_size=8)
        summary = multi_seed(lambda s: synthetic_model(corpus, seed=s), corpus.train, corpus.valid,
                             corpus.test, cfg, [4, 4])
        assert len(summary.rows) == 2
        assert all(v == 0.0 for v in summary.std.values())

    def test_needs_two(self, corpus):
        with pytest.raises(ValueError):
            multi_seed(lambda s: None, corpus.train, corpus.valid, corpus.test, TrainConfig(), [1])
