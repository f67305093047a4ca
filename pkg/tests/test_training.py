"""Test losses, the optimizer and the alternating training loop"""

import numpy as np
import pytest

from shared.autodiff.gradcheck import evaluate, value_and_grad
from shared.exceptions import DivergenceError, ValidationError
from shared.imaging.synthdata import dataset_from_config, stack_images, stack_measurements
from shared.models.configs import TrainConfig
from shared.models.records import EpochRecord, TrainHistory
from shared.networks.convnets import init_params
from services.cli.main import generator_grad_report
from services.training.checkpoint import load_checkpoint
from services.training.losses import critic_objective, generator_objective, kidot_terms, loss_kidot, loss_sup
from services.training.optimizer import RMSPropState, lr_at_epoch, rmsprop_update
from services.training.trainer import Trainer, initial_checkpoint, train, write_history_csv


@pytest.fixture
def batches(tiny_dataset):
    """Unpaired measurements, clean images and one paired batch"""
    batch_p = stack_measurements(tiny_dataset.unpaired_measurements[:2])
    batch_q = stack_images(tiny_dataset.clean_images[:2])[:, 0]
    paired = (
        stack_measurements([y for y, _ in tiny_dataset.paired[:2]]),
        stack_images([x for _, x in tiny_dataset.paired[:2]])[:, 0],
    )
    return batch_p, batch_q, paired


@pytest.fixture
def networks(tiny_train_cfg):
    ckpt = initial_checkpoint(tiny_train_cfg)
    hphi = ckpt.hphi.with_values(ckpt.hphi.values + 0.05)
    return hphi, ckpt.critic


class TestOptimizer:
    """Test RMSProp and the learning-rate schedule"""

    def test_first_step(self):
        """Test the first update from a zero second-moment estimate"""
        params = init_params(TrainConfig().critic, seed=0)
        grads = np.linspace(-1.0, 1.0, len(params))
        state, updated = rmsprop_update(RMSPropState.zeros(len(params)), params, grads, lr=0.01)
        v = 0.1 * grads ** 2
        assert state.v == pytest.approx(v)
        assert state.steps == 1
        assert updated.values == pytest.approx(params.values - 0.01 * grads / (np.sqrt(v) + 1e-8))

    def test_constant_gradient_step_tends_to_lr(self, rng):
        """Test a constant gradient makes every step approach lr·sign(g) from above"""
        params = init_params(TrainConfig().critic, seed=0)
        grads = np.sign(rng.standard_normal(len(params))) * rng.uniform(0.5, 2.0, len(params))
        state = RMSPropState.zeros(len(params))
        previous = params
        first = None
        for _ in range(200):
            state, params = rmsprop_update(state, params, grads, lr=0.01)
            step = previous.values - params.values
            first = step if first is None else first
            previous = params
        assert np.abs(first) == pytest.approx(np.full(len(params), 0.01 / np.sqrt(0.1)), rel=1e-6)
        assert step == pytest.approx(0.01 * np.sign(grads), rel=1e-6)

    def test_shape_mismatch(self):
        """Test gradients of the wrong length are rejected"""
        params = init_params(TrainConfig().critic, seed=0)
        with pytest.raises(ValidationError, match="optimizer shapes disagree"):
            rmsprop_update(RMSPropState.zeros(len(params)), params, np.zeros(3), lr=0.01)

    @pytest.mark.parametrize("epoch,scale", [(0, 1.0), (29, 1.0), (30, 10.0), (65, 100.0)])
    def test_step_schedule(self, epoch, scale):
        """Test rates drop tenfold every 30 epochs"""
        lr_t, lr_c = lr_at_epoch(TrainConfig(), epoch)
        assert lr_t == pytest.approx(1e-4 / scale)
        assert lr_c == pytest.approx(2e-4 / scale)

    def test_negative_epoch(self):
        """Test negative epochs are rejected"""
        with pytest.raises(ValidationError, match="epoch must be >= 0"):
            lr_at_epoch(TrainConfig(), -1)


class TestLosses:
    """Test how the objectives combine"""

    def test_zero_lambda_is_path_cost(self, tiny_dataset, tiny_train_cfg, networks, batches):
        """Test the adversarial term disappears at lambda = 0"""
        hphi, critic = networks
        batch_p, batch_q, _ = batches
        cfg = tiny_train_cfg.model_copy(update={"lambda_": 0.0})
        fm = tiny_dataset.fm_test
        with_critic = loss_kidot(hphi, critic, batch_p, batch_q, fm, tiny_train_cfg).item()
        without = loss_kidot(hphi, critic, batch_p, batch_q, fm, cfg).item()
        gap = critic_objective(critic, hphi, batch_p, batch_q, fm, tiny_train_cfg).item()
        assert with_critic == pytest.approx(without + tiny_train_cfg.lambda_ * gap, rel=1e-12)

    def test_generator_adds_supervision(self, tiny_dataset, tiny_train_cfg, networks, batches):
        """Test the generator objective is loss_kidot + gamma·loss_sup"""
        hphi, critic = networks
        batch_p, batch_q, paired = batches
        fm = tiny_dataset.fm_test
        total = generator_objective(hphi, critic, batch_p, batch_q, fm, tiny_train_cfg, paired).item()
        expected = (
            loss_kidot(hphi, critic, batch_p, batch_q, fm, tiny_train_cfg).item()
            + tiny_train_cfg.gamma * loss_sup(hphi, paired, fm, tiny_train_cfg).item()
        )
        assert total == pytest.approx(expected, rel=1e-12)

    def test_zero_gamma_skips_pairs(self, tiny_dataset, tiny_train_cfg, networks, batches):
        """Test gamma = 0 ignores the paired batch"""
        hphi, critic = networks
        batch_p, batch_q, paired = batches
        cfg = tiny_train_cfg.model_copy(update={"gamma": 0.0})
        fm = tiny_dataset.fm_test
        assert generator_objective(hphi, critic, batch_p, batch_q, fm, cfg, paired).item() == pytest.approx(
            loss_kidot(hphi, critic, batch_p, batch_q, fm, cfg).item(), rel=1e-12
        )

    def test_small_gradient_step_descends(self, tiny_dataset, tiny_train_cfg, networks, batches):
        """Test one plain gradient step at lr 1e-6 does not increase loss_kidot"""
        hphi, critic = networks
        batch_p, batch_q, _ = batches
        fm = tiny_dataset.fm_test

        def loss(bound):
            return loss_kidot(bound, critic, batch_p, batch_q, fm, tiny_train_cfg)

        before, g = value_and_grad(loss, hphi)
        after = evaluate(loss, hphi.with_values(hphi.values - 1e-6 * g))
        assert np.any(g != 0.0)
        assert after <= before

    def test_zero_gamma_gradient_is_kidot_gradient(self, tiny_dataset, tiny_train_cfg, networks, batches):
        """Test gamma = 0 leaves no supervised contribution in the generator gradient"""
        hphi, critic = networks
        batch_p, batch_q, paired = batches
        cfg = tiny_train_cfg.model_copy(update={"gamma": 0.0})
        fm = tiny_dataset.fm_test
        _, total = value_and_grad(lambda b: generator_objective(b, critic, batch_p, batch_q, fm, cfg, paired), hphi)
        _, kidot = value_and_grad(lambda b: loss_kidot(b, critic, batch_p, batch_q, fm, cfg), hphi)
        assert total == pytest.approx(kidot, abs=1e-12)

    def test_zero_lambda_gradient_ignores_critic(self, tiny_dataset, tiny_train_cfg, networks, batches):
        """Test lambda = 0 reduces the gradient to that of the path cost, whatever the critic"""
        hphi, critic = networks
        batch_p, batch_q, _ = batches
        cfg = tiny_train_cfg.model_copy(update={"lambda_": 0.0})
        fm = tiny_dataset.fm_test
        other_critic = critic.with_values(-critic.values)
        _, g = value_and_grad(lambda b: loss_kidot(b, critic, batch_p, batch_q, fm, cfg), hphi)
        _, g_other = value_and_grad(lambda b: loss_kidot(b, other_critic, batch_p, batch_q, fm, cfg), hphi)
        _, cost = value_and_grad(lambda b: kidot_terms(b, critic, batch_p, batch_q, fm, tiny_train_cfg)[0], hphi)
        assert np.array_equal(g, g_other)
        assert g == pytest.approx(cost, abs=1e-12)

    def test_gradient_splits_into_cost_and_gap(self, tiny_dataset, tiny_train_cfg, networks, batches):
        """Test the loss_kidot gradient is the path-cost gradient plus lambda times the gap gradient"""
        hphi, critic = networks
        batch_p, batch_q, _ = batches
        cfg = tiny_train_cfg.model_copy(update={"lambda_": 2.5})
        fm = tiny_dataset.fm_test
        _, total = value_and_grad(lambda b: loss_kidot(b, critic, batch_p, batch_q, fm, cfg), hphi)
        _, cost = value_and_grad(lambda b: kidot_terms(b, critic, batch_p, batch_q, fm, cfg)[0], hphi)
        _, gap = value_and_grad(lambda b: kidot_terms(b, critic, batch_p, batch_q, fm, cfg)[1], hphi)
        assert total == pytest.approx(cost + 2.5 * gap, abs=1e-10)


    def test_supervised_loss_zero_at_truth(self, identity_model, tiny_train_cfg, rng):
        """Test clean identity pairs with an untrained field reconstruct exactly"""
        hphi = initial_checkpoint(tiny_train_cfg).hphi
        images = rng.random((2, 16, 16))
        assert loss_sup(hphi, (images, images), identity_model, tiny_train_cfg).item() == 0.0

    def test_empty_batch(self, tiny_dataset, tiny_train_cfg, networks, batches):
        """Test empty measurement batches are rejected"""
        hphi, critic = networks
        _, batch_q, _ = batches
        empty = np.zeros((0,) + tiny_dataset.fm_test.range_shape)
        with pytest.raises(ValidationError, match="unpaired measurement batch is empty"):
            loss_kidot(hphi, critic, empty, batch_q, tiny_dataset.fm_test, tiny_train_cfg)

    def test_paired_count_mismatch(self, tiny_dataset, tiny_train_cfg, networks, batches):
        """Test paired measurements and images must line up"""
        hphi, _ = networks
        _, _, (y_pair, x_pair) = batches
        with pytest.raises(ValidationError, match="paired measurements for"):
            loss_sup(hphi, (y_pair, x_pair[:1]), tiny_dataset.fm_train, tiny_train_cfg)


class TestTrainer:
    """Test the training loop"""

    def test_zero_epochs_writes_initial_checkpoint(self, tiny_dataset, tiny_train_cfg, tmp_path):
        """Test epochs = 0 persists the freshly initialized networks"""
        cfg = tiny_train_cfg.model_copy(update={"epochs": 0})
        hphi, _, history = train(tiny_dataset, cfg, run_dir=tmp_path)
        assert history.records == []
        ckpt = load_checkpoint(tmp_path / "checkpoint.kdt")
        assert np.array_equal(ckpt.hphi.values, initial_checkpoint(cfg).hphi.values)
        assert ckpt.epoch == 0
        lines = (tmp_path / "history.csv").read_text(encoding="utf-8").splitlines()
        assert lines == ["epoch,generator_loss,critic_loss,path_cost,supervised,val_psnr,val_ssim,"
                         "lipschitz,lr_transport,lr_critic"]

    def test_one_epoch(self, tiny_dataset, tiny_train_cfg, tmp_path):
        """Test an epoch updates both networks and records its history row"""
        hphi, critic, history = train(tiny_dataset, tiny_train_cfg, run_dir=tmp_path)
        initial = initial_checkpoint(tiny_train_cfg)
        assert not np.array_equal(hphi.values, initial.hphi.values)
        assert not np.array_equal(critic.values, initial.critic.values)
        assert np.max(np.abs(critic.values)) <= tiny_train_cfg.clip_c
        assert len(history.records) == 1
        record = history.records[0]
        assert record.epoch == 0
        assert record.val_psnr is not None
        assert record.lipschitz >= 0.0
        assert len((tmp_path / "history.csv").read_text(encoding="utf-8").splitlines()) == 2
        assert load_checkpoint(tmp_path / "checkpoint.kdt").epoch == 1

    def test_deterministic(self, tiny_dataset, tiny_train_cfg):
        """Test the same seed trains to bit-identical parameters"""
        first, _, _ = train(tiny_dataset, tiny_train_cfg)
        second, _, _ = train(tiny_dataset, tiny_train_cfg)
        assert np.array_equal(first.values, second.values)

    def test_resume_matches_uninterrupted_run(self, tiny_dataset, tiny_train_cfg, tmp_path):
        """Test one epoch plus a resumed epoch equals two straight epochs"""
        two = tiny_train_cfg.model_copy(update={"epochs": 2})
        straight, straight_critic, _ = train(tiny_dataset, two)

        train(tiny_dataset, tiny_train_cfg, run_dir=tmp_path)
        resumed, resumed_critic, history = train(
            tiny_dataset, two, run_dir=tmp_path, resume=load_checkpoint(tmp_path / "checkpoint.kdt")
        )
        assert np.array_equal(resumed.values, straight.values)
        assert np.array_equal(resumed_critic.values, straight_critic.values)
        assert [r.epoch for r in history.records] == [0, 1]

    def test_divergence_propagates(self, tiny_dataset, tiny_train_cfg, tmp_path, mocker):
        """Test a numerical failure aborts training after the initial checkpoint is written"""
        mocker.patch.object(Trainer, "_epoch", side_effect=DivergenceError("state blew up", step=2))
        with pytest.raises(DivergenceError, match="state blew up"):
            train(tiny_dataset, tiny_train_cfg, run_dir=tmp_path)
        assert (tmp_path / "checkpoint.kdt").exists()

    def test_early_stop_on_plateau(self, tiny_dataset, tiny_train_cfg, mocker):
        """Test training stops once validation PSNR fails to improve for `patience` epochs"""
        cfg = tiny_train_cfg.model_copy(update={"epochs": 10, "patience": 2})
        mocker.patch.object(Trainer, "validate", side_effect=[(30.0, None), (29.0, None), (28.5, None)])
        _, _, history = train(tiny_dataset, cfg)
        assert len(history.records) == 3
        assert history.stopped_early
        assert history.best_psnr() == 30.0

    def test_needs_unpaired_data(self, tiny_data_cfg, tiny_train_cfg):
        """Test an empty unpaired split is rejected"""
        dataset = dataset_from_config(tiny_data_cfg.model_copy(update={"n_unpaired": 0}))
        with pytest.raises(ValidationError, match="at least one unpaired measurement"):
            Trainer(dataset, tiny_train_cfg)

    def test_history_csv_leaves_missing_values_blank(self, tmp_path):
        """Test absent validation metrics are written as empty cells"""
        history = TrainHistory(
            records=[
                EpochRecord(
                    epoch=0,
                    generator_loss=1.0,
                    critic_loss=0.5,
                    path_cost=0.9,
                    supervised=0.0,
                    lipschitz=0.01,
                    lr_transport=1e-4,
                    lr_critic=2e-4,
                )
            ]
        )
        write_history_csv(history, tmp_path / "history.csv")
        row = (tmp_path / "history.csv").read_text(encoding="utf-8").splitlines()[1].split(",")
        assert row[5] == "" and row[6] == ""
        assert float(row[1]) == 1.0


@pytest.mark.slow
class TestGeneratorGradient:
    """Test the full generator gradient against finite differences"""

    @pytest.mark.parametrize("seed", range(5))
    def test_generator_gradient(self, seed):
        """Test loss_kidot + gamma·loss_sup on a tiny masked-Fourier problem"""
        report = generator_grad_report(side=8, steps=3, seed=seed, tol=1e-4)
        assert report.passed, f"worst coordinate {report.worst_index}: {report.max_abs_rel_err:.2e}"
