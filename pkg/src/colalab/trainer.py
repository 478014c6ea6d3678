"""Monte Carlo ELBO loss, learning-rate schedule and the two-phase training loop."""

import json
import logging
import math
import os
import time
from dataclasses import asdict, dataclass, fields

import numpy as np
import torch

from .exceptions import InvalidArgumentError, StateError
from .matcher import class_posterior, encode_templates
from .model.cola import SlotInit
from .model.teacher import teacher_features

logger = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    lam: float = 0.01
    batch_size: int = 32
    total_steps: int = 30_000
    warmup_steps: int = 1_000
    halve_every_steps: int = 10_000
    lr_backbone_peak: float = 1e-4
    lr_decoder_peak: float = 3e-4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.99
    phase_switch_step: int = None  # None: 20% of total_steps
    seed: int = 0
    sample_templates: bool = True
    templates_as_inputs: bool = True
    log_every: int = 50
    checkpoint_every: int = 0
    teacher_steps: int = 1500
    teacher_batch_size: int = 8
    teacher_lr: float = 3e-4

    def __post_init__(self):
        if self.lam < 0:
            raise InvalidArgumentError("lambda must be >= 0")
        for name in ("lr_backbone_peak", "lr_decoder_peak", "teacher_lr"):
            if not getattr(self, name) > 0:
                raise InvalidArgumentError(f"{name} must be > 0")
        if self.batch_size < 1 or self.halve_every_steps < 1:
            raise InvalidArgumentError("batch_size and halve_every_steps must be positive")

    @property
    def switch_step(self):
        if self.phase_switch_step is not None:
            return self.phase_switch_step
        return int(0.2 * self.total_steps)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


@dataclass
class LossReport:
    total: torch.Tensor
    recon: torch.Tensor
    pred: torch.Tensor
    kl_input: torch.Tensor
    kl_temp: torch.Tensor

    def as_dict(self):
        return {k: float(getattr(self, k).detach()) for k in ("total", "recon", "pred", "kl_input", "kl_temp")}


def gaussian_kl(mu_q, sigma_q, mu_p, sigma_p):
    """Closed-form KL between diagonal Gaussians, summed over all entries."""
    sigma_q = torch.as_tensor(sigma_q, dtype=mu_q.dtype)
    sigma_p = torch.as_tensor(sigma_p, dtype=mu_q.dtype)
    var_q, var_p = sigma_q * sigma_q, sigma_p * sigma_p
    kl = torch.log(sigma_p / sigma_q) + (var_q + (mu_q - mu_p) ** 2) / (2 * var_p) - 0.5
    return kl.expand(mu_q.shape).sum()


def loss(model, images, labels, bank, config, generator=None, eps=None, detach_templates=True):
    """Training objective ``||F - F~||^2 - lam * log pi_y`` averaged over the batch.

    The reconstruction is summed over teacher-feature entries. ``bank`` may be
    ``None`` while the prediction term is disabled; the prediction term uses
    the cached template centroids, detached unless ``detach_templates`` is
    off (only useful for checking that the detachment matters).
    """
    images = torch.as_tensor(images, dtype=model.eps_mu.dtype)
    if eps is None:
        eps = model.slot_init(generator, sample=True)
    target = teacher_features(model.teacher, images)
    comps = model.encode(images, eps, generator, eval_mode=False)
    recon_f = model.decode(comps.sample).mu_d
    recon = (target - recon_f).pow(2).sum(dim=(1, 2, 3)).mean()
    sigma = model.config.sigma
    kl_input = gaussian_kl(comps.mean, sigma, comps.mean, sigma)
    if bank is None:
        if config.lam > 0:
            raise InvalidArgumentError("the prediction term needs a template bank")
        pred = torch.zeros((), dtype=recon.dtype)
        kl_temp = torch.zeros((), dtype=recon.dtype)
    else:
        idx = bank.index_of(labels)
        centroids = bank.centroids.detach() if detach_templates else bank.centroids
        post = class_posterior(comps.sample, centroids, sigma)
        pred = -post.log_probs[torch.arange(len(idx)), idx].mean()
        kl_temp = gaussian_kl(bank.latents, sigma, bank.latents, sigma)
    total = recon + config.lam * pred
    return LossReport(total, recon, pred, kl_input, kl_temp)


def lr_schedule(step, peak, warmup_steps, halve_every):
    """Linear warmup from 0 to ``peak``, then halve every ``halve_every`` steps."""
    if step < 0:
        raise InvalidArgumentError("step must be >= 0")
    if warmup_steps > 0 and step < warmup_steps:
        return peak * step / warmup_steps
    return peak * 0.5 ** math.floor((step - warmup_steps) / halve_every)


def make_optimizer(model, config):
    return torch.optim.Adam(
        [
            {"params": list(model.encoder_parameters()), "name": "backbone"},
            {"params": list(model.decoder_parameters()), "name": "decoder"},
        ],
        lr=0.0,
        betas=(config.adam_beta1, config.adam_beta2),
    )


class Trainer:
    """Two-phase training over one split.

    Phase 1 optimizes reconstruction only. From ``config.switch_step`` the
    prediction term is weighted by ``config.lam``. An epoch is one pass over
    the shuffled training pool; at each epoch start one slot init is drawn
    and the training-class templates are re-encoded with it, without
    gradients, into the cached bank used until the next epoch.
    """

    def __init__(self, model, images, labels, template_images, template_class_ids, config,
                 run_dir=None):
        if not model.teacher.is_frozen:
            raise StateError("teacher must be trained and frozen before training")
        if len(images) == 0:
            raise InvalidArgumentError("empty training split")
        self.model = model
        self.config = config
        self.template_images = np.asarray(template_images)
        self.template_class_ids = tuple(int(c) for c in template_class_ids)
        dtype = model.eps_mu.dtype
        x = torch.as_tensor(np.asarray(images), dtype=dtype)
        y = torch.as_tensor(np.asarray(labels), dtype=torch.long)
        if config.templates_as_inputs:
            n = self.template_images.shape[1]
            tx = torch.as_tensor(self.template_images.reshape(-1, *self.template_images.shape[2:]), dtype=dtype)
            ty = torch.as_tensor(np.repeat(self.template_class_ids, n), dtype=torch.long)
            x, y = torch.cat([x, tx]), torch.cat([y, ty])
        self.x, self.y = x, y
        self.optimizer = make_optimizer(model, config)
        self.generator = torch.Generator().manual_seed(config.seed)
        self.step = 0
        self.epoch = -1
        self.perm = None
        self.pos = 0
        self.eps_noise = None
        self.bank = None
        self.run_dir = run_dir
        self.history = []
        self._t0 = time.time()

    @property
    def lam(self):
        return self.config.lam if self.step >= self.config.switch_step else 0.0

    def _eps(self):
        m = self.model
        return SlotInit(m.eps_mu + m.eps_log_sigma.exp() * self.eps_noise, "sampled")

    def _refresh_bank(self):
        self.bank = encode_templates(
            self.template_images, self.model, self._eps(), self.template_class_ids,
            generator=self.generator, sample=self.config.sample_templates,
        )

    def _new_epoch(self):
        self.epoch += 1
        self.perm = torch.randperm(len(self.x), generator=self.generator)
        self.pos = 0
        self.eps_noise = torch.randn(self.model.eps_mu.shape, generator=self.generator,
                                     dtype=self.model.eps_mu.dtype)
        self.bank = None

    def _next_batch(self):
        if self.perm is None or self.pos + self.config.batch_size > len(self.perm):
            self._new_epoch()
        idx = self.perm[self.pos:self.pos + self.config.batch_size]
        self.pos += self.config.batch_size
        return self.x[idx], self.y[idx]

    def _set_lr(self):
        c = self.config
        rates = {}
        for group in self.optimizer.param_groups:
            peak = c.lr_backbone_peak if group["name"] == "backbone" else c.lr_decoder_peak
            group["lr"] = lr_schedule(self.step, peak, c.warmup_steps, c.halve_every_steps)
            rates[group["name"]] = group["lr"]
        return rates

    def train_step(self):
        self.model.train()
        x, y = self._next_batch()
        lam = self.lam
        if lam > 0 and self.bank is None:
            self._refresh_bank()
        rates = self._set_lr()
        cfg = TrainConfig.from_dict({**self.config.to_dict(), "lam": lam})
        report = loss(self.model, x, y.numpy(), self.bank if lam > 0 else None, cfg,
                      self.generator, self._eps())
        self.optimizer.zero_grad()
        report.total.backward()
        self.optimizer.step()
        self.step += 1
        record = {
            "step": self.step,
            **{k: v for k, v in report.as_dict().items() if k in ("total", "recon", "pred")},
            "lam": lam,
            "lr_backbone": rates["backbone"],
            "lr_decoder": rates["decoder"],
            "wallclock": time.time() - self._t0,
        }
        self.history.append(record)
        return report, record

    def run(self, steps=None, callback=None):
        end = self.config.total_steps if steps is None else self.step + steps
        log_file = None
        if self.run_dir:
            os.makedirs(self.run_dir, exist_ok=True)
            log_file = open(os.path.join(self.run_dir, "metrics.jsonl"), "a")
        try:
            while self.step < end:
                report, record = self.train_step()
                if not math.isfinite(record["total"]):
                    raise FloatingPointError(f"non-finite loss at step {self.step}")
                if self.step % self.config.log_every == 0 or self.step == end:
                    logger.info("step %d total %.4f recon %.4f pred %.4f", self.step,
                                record["total"], record["recon"], record["pred"])
                    if log_file:
                        log_file.write(json.dumps(record) + "\n")
                        log_file.flush()
                if callback:
                    callback(self, record)
                every = self.config.checkpoint_every
                if self.run_dir and every and self.step % every == 0:
                    self.save(os.path.join(self.run_dir, "checkpoint.pt"))
        finally:
            if log_file:
                log_file.close()
        return self.history

    def state(self):
        return {
            "step": self.step,
            "epoch": self.epoch,
            "perm": self.perm,
            "pos": self.pos,
            "eps_noise": self.eps_noise,
            "generator": self.generator.get_state(),
            "optimizer": self.optimizer.state_dict(),
            "bank": None if self.bank is None else {
                "class_ids": self.bank.class_ids,
                "latents": self.bank.latents,
                "centroids": self.bank.centroids,
                "eps": self.bank.eps_used.values,
            },
            "phase_switch_step": self.config.switch_step,
        }

    def load_state(self, state):
        from .matcher import TemplateBank

        self.step = state["step"]
        self.epoch = state["epoch"]
        self.perm = state["perm"]
        self.pos = state["pos"]
        self.eps_noise = state["eps_noise"]
        self.generator.set_state(state["generator"])
        self.optimizer.load_state_dict(state["optimizer"])
        b = state["bank"]
        self.bank = None if b is None else TemplateBank(
            tuple(b["class_ids"]), b["latents"], b["centroids"], SlotInit(b["eps"], "sampled"),
            self.config.sample_templates,
        )

    def save(self, path, **extra):
        from .model.checkpoint import save_model

        save_model(path, self.model, train_config=self.config.to_dict(), train_state=self.state(),
                   **extra)


def train_teacher_on_split(model, corpus, split, config):
    """Pretrain and freeze ``model.teacher`` on the split's training classes."""
    from .model.teacher import train_teacher

    if not split.train_classes:
        raise InvalidArgumentError("split has no training classes")
    x, y = corpus.samples(split.train_classes)
    return train_teacher(model.teacher, x, y, steps=config.teacher_steps,
                         batch_size=config.teacher_batch_size, lr=config.teacher_lr,
                         betas=(config.adam_beta1, config.adam_beta2), seed=config.seed)


def train(corpus, split, model, config, run_dir=None, callback=None):
    """Train ``model`` on ``split``'s training classes; returns the Trainer.

    When ``run_dir`` is given the final checkpoint lands in
    ``run_dir/checkpoint.pt`` with the training classes recorded.
    """
    if not model.teacher.is_frozen:
        raise StateError("teacher missing: train and freeze the teacher first")
    torch.manual_seed(config.seed)
    x, y = corpus.samples(split.train_classes)
    templates = corpus.template_images(split.train_classes)
    trainer = Trainer(model, x, y, templates, split.train_classes, config, run_dir=run_dir)
    model.training_record = {"charset_id": corpus.charset_id, "classes": list(split.train_classes),
                             "split": split.name}
    trainer.run(callback=callback)
    if run_dir:
        trainer.save(os.path.join(run_dir, "checkpoint.pt"), training_record=model.training_record)
    return trainer
