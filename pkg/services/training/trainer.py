"""The alternating min-max training loop.

Per outer iteration: n_critic ascent steps of the critic on the dual gap (each
followed by weight clipping), then one descent step of the regularizer field
on loss_kidot + gamma·loss_sup. Every epoch draws its batches from its own
random stream, so resuming at an epoch boundary replays the same batches.
"""

import math
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np

from shared.autodiff.gradcheck import value_and_grad
from shared.autodiff.params import ParamVector
from shared.exceptions import NumericalError, ValidationError
from shared.imaging.metrics import psnr, ssim
from shared.imaging.operators import Image
from shared.imaging.synthdata import Dataset, stack_images, stack_measurements
from shared.models.configs import TrainConfig
from shared.models.records import EpochRecord, TrainHistory
from shared.networks.convnets import init_params
from shared.networks.lipschitz import clip_weights, estimate_lipschitz
from shared.transport.flow import reconstruct_batch
from shared.utils.arrays import write_csv
from shared.utils.logging import epoch_context, get_logger
from shared.utils.seeding import derive_rng
from services.training.checkpoint import CHECKPOINT_FILE, Checkpoint, save_checkpoint
from services.training.losses import dual_gap, generator_terms
from services.training.optimizer import RMSPropState, lr_at_epoch, rmsprop_update

logger = get_logger(__name__)

HISTORY_FIELDS = [
    "epoch", "generator_loss", "critic_loss", "path_cost", "supervised",
    "val_psnr", "val_ssim", "lipschitz", "lr_transport", "lr_critic",
]
SSIM_MIN_SIDE = 11


def initial_checkpoint(cfg: TrainConfig) -> Checkpoint:
    """Freshly initialized networks with clipped critic and empty optimizer state"""
    hphi = init_params(cfg.regularizer, cfg.seed)
    critic = clip_weights(init_params(cfg.critic, cfg.seed), cfg.clip_c)
    return Checkpoint(
        hphi=hphi,
        critic=critic,
        hphi_opt=RMSPropState.zeros(len(hphi), cfg.rmsprop_rho, cfg.rmsprop_eps),
        critic_opt=RMSPropState.zeros(len(critic), cfg.rmsprop_rho, cfg.rmsprop_eps),
        cfg=cfg,
    )


def write_history_csv(history: TrainHistory, path: Union[str, Path]) -> None:
    rows = []
    for record in history.records:
        values = record.model_dump()
        rows.append(["" if values[k] is None else values[k] for k in HISTORY_FIELDS])
    write_csv(path, HISTORY_FIELDS, rows)


class Trainer:
    """Runs the epochs of one training job and keeps its checkpoint current"""

    def __init__(
        self,
        dataset: Dataset,
        cfg: TrainConfig,
        run_dir: Optional[Union[str, Path]] = None,
        resume: Optional[Checkpoint] = None,
    ):
        if not dataset.unpaired_measurements:
            raise ValidationError("training needs at least one unpaired measurement")
        if not dataset.clean_images:
            raise ValidationError("training needs at least one clean image")
        if dataset.clean_images[0].n != dataset.fm_test.n:
            raise ValidationError("clean images and forward model disagree on the image side")
        self.dataset = dataset
        self.cfg = cfg
        self.run_dir = Path(run_dir) if run_dir is not None else None
        self.state = resume if resume is not None else initial_checkpoint(cfg)
        if resume is not None:
            self.state.cfg = cfg

        # Stacked arrays, built once
        self.p_batch = stack_measurements(dataset.unpaired_measurements)
        self.q_batch = stack_images(dataset.clean_images)[:, 0]
        self.pairs: Optional[Tuple[np.ndarray, np.ndarray]] = None
        if dataset.paired:
            self.pairs = (
                stack_measurements([y for y, _ in dataset.paired]),
                stack_images([x for _, x in dataset.paired])[:, 0],
            )
        validation = dataset.validation or dataset.paired
        self.val_fm = dataset.fm_test if dataset.validation else dataset.fm_train
        self.val_y = stack_measurements([y for y, _ in validation]) if validation else None
        self.val_x: List[Image] = [x for _, x in validation]

    # ------------------------------------------------------------------ steps

    def _critic_step(self, endpoints: np.ndarray, batch_q: np.ndarray, lr: float) -> float:
        """One ascent step on the dual gap followed by clipping"""
        cfg = self.cfg

        def negative_gap(bound):
            return -dual_gap(bound, endpoints, batch_q, cfg)

        value, grads = value_and_grad(negative_gap, self.state.critic)
        self.state.critic_opt, critic = rmsprop_update(self.state.critic_opt, self.state.critic, grads, lr)
        self.state.critic = clip_weights(critic, cfg.clip_c)
        return -value

    def _generator_step(
        self, batch_p: np.ndarray, batch_q: np.ndarray, paired, lr: float
    ) -> Tuple[float, float, float]:
        """One descent step of H_phi; returns (objective, path term, supervised term)"""
        cfg, fm = self.cfg, self.dataset.fm_test
        critic = self.state.critic

        terms = {}

        def objective(bound):
            total, cost, sup = generator_terms(bound, critic, batch_p, batch_q, fm, cfg, paired, self.dataset.fm_train)
            terms["path"] = cost.item()
            terms["supervised"] = 0.0 if sup is None else sup.item()
            return total

        value, grads = value_and_grad(objective, self.state.hphi)
        self.state.hphi_opt, self.state.hphi = rmsprop_update(self.state.hphi_opt, self.state.hphi, grads, lr)
        return value, terms["path"], terms["supervised"]

    def _endpoints(self, batch_p: np.ndarray) -> np.ndarray:
        cfg = self.cfg
        return reconstruct_batch(
            batch_p, self.dataset.fm_test, self.state.hphi, cfg.n_steps, cfg.regularizer.nonlinearity, cfg.physics
        )

    # ------------------------------------------------------------- validation

    def validate(self) -> Tuple[Optional[float], Optional[float]]:
        """Mean PSNR and SSIM of the endpoints on the validation split"""
        if self.val_y is None:
            return None, None
        cfg = self.cfg
        recon = reconstruct_batch(
            self.val_y, self.val_fm, self.state.hphi, cfg.n_steps, cfg.regularizer.nonlinearity, cfg.physics
        )
        images = [Image(r) for r in recon]
        val_psnr = float(np.mean([psnr(r, x) for r, x in zip(images, self.val_x)]))
        if images[0].n < SSIM_MIN_SIDE:
            return val_psnr, None
        return val_psnr, float(np.mean([ssim(r, x) for r, x in zip(images, self.val_x)]))

    # ------------------------------------------------------------------ epochs

    def _epoch(self, epoch: int) -> EpochRecord:
        cfg = self.cfg
        lr_t, lr_c = lr_at_epoch(cfg, epoch)
        rng = derive_rng(cfg.seed, "epoch", epoch)
        n_p, n_q = self.p_batch.shape[0], self.q_batch.shape[0]
        order = rng.permutation(n_p)
        iterations = math.ceil(n_p / cfg.batch)
        q_size = min(cfg.batch, n_q)
        use_pairs = self.pairs is not None and cfg.gamma > 0

        gen_losses, critic_values, path_terms, sup_terms = [], [], [], []
        endpoints = batch_q = None
        for it in range(iterations):
            batch_p = self.p_batch[order[it * cfg.batch:(it + 1) * cfg.batch]]

            # Critic ascent with the transport frozen
            endpoints = self._endpoints(batch_p)
            for _ in range(cfg.n_critic):
                batch_q = self.q_batch[rng.choice(n_q, size=q_size, replace=False)]
                critic_values.append(self._critic_step(endpoints, batch_q, lr_c))

            # Transport descent with the critic frozen
            batch_q = self.q_batch[rng.choice(n_q, size=q_size, replace=False)]
            paired = None
            if use_pairs:
                n_pairs = self.pairs[0].shape[0]
                idx = rng.choice(n_pairs, size=min(cfg.effective_paired_batch, n_pairs), replace=False)
                paired = (self.pairs[0][idx], self.pairs[1][idx])
            value, path, sup = self._generator_step(batch_p, batch_q, paired, lr_t)
            gen_losses.append(value)
            path_terms.append(path)
            sup_terms.append(sup)

        val_psnr, val_ssim = self.validate()
        audit = [(Image(a), Image(b)) for a, b in zip(endpoints, batch_q)]
        try:
            lipschitz = estimate_lipschitz(self.state.critic, audit, cfg.critic.nonlinearity)
        except ValidationError:
            lipschitz = 0.0
        return EpochRecord(
            epoch=epoch,
            generator_loss=float(np.mean(gen_losses)),
            critic_loss=float(np.mean(critic_values)),
            path_cost=float(np.mean(path_terms)),
            supervised=float(np.mean(sup_terms)),
            val_psnr=val_psnr,
            val_ssim=val_ssim,
            lipschitz=lipschitz,
            lr_transport=lr_t,
            lr_critic=lr_c,
        )

    def _persist(self) -> None:
        if self.run_dir is None:
            return
        save_checkpoint(self.state, self.run_dir / CHECKPOINT_FILE)
        write_history_csv(self.state.history, self.run_dir / "history.csv")

    def _improved(self, record: EpochRecord) -> None:
        """Track the validation PSNR plateau"""
        if record.val_psnr is None:
            return
        if self.state.best_psnr is None or record.val_psnr > self.state.best_psnr:
            self.state.best_psnr = record.val_psnr
            self.state.stale_epochs = 0
        else:
            self.state.stale_epochs += 1

    def run(self) -> Checkpoint:
        """Train until the epoch budget is spent or validation PSNR plateaus"""
        cfg = self.cfg
        logger.info(
            "training started",
            start_epoch=self.state.epoch,
            epochs=cfg.epochs,
            unpaired=self.p_batch.shape[0],
            clean=self.q_batch.shape[0],
            paired=0 if self.pairs is None else self.pairs[0].shape[0],
        )
        if self.state.epoch == 0:
            self._persist()
        while self.state.epoch < cfg.epochs and not self.state.history.stopped_early:
            epoch = self.state.epoch
            with epoch_context(epoch):
                try:
                    record = self._epoch(epoch)
                except NumericalError as e:
                    logger.error("training aborted", error=e.message)
                    raise
                self.state.history.records.append(record)
                self.state.epoch = epoch + 1
                self._improved(record)
                if self.state.stale_epochs >= cfg.patience:
                    self.state.history.stopped_early = True
                logger.info(
                    "epoch completed",
                    generator_loss=record.generator_loss,
                    critic_loss=record.critic_loss,
                    val_psnr=record.val_psnr,
                    lipschitz=record.lipschitz,
                )
                self._persist()
        if self.state.history.stopped_early:
            logger.info("early stop", epoch=self.state.epoch, best_psnr=self.state.best_psnr)
        return self.state


def train(
    dataset: Dataset,
    cfg: TrainConfig,
    run_dir: Optional[Union[str, Path]] = None,
    resume: Optional[Checkpoint] = None,
) -> Tuple[ParamVector, ParamVector, TrainHistory]:
    """Algorithm driver: returns (H_phi params, critic params, history)"""
    state = Trainer(dataset, cfg, run_dir, resume).run()
    return state.hphi, state.critic, state.history
