from __future__ import annotations

import dataclasses
import logging
import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from ..autodiff import backward, no_grad
from ..errors import ContractError, NumericError
from ..ipa.config import config_from_dict
from .data import CorpusStreams, sample_batch, window_batches
from .loss import cross_entropy
from .metrics import MetricsRecord, MetricsWriter
from .optim import Adam, clip_grad_norm
from .state import save_training_state

log = logging.getLogger(__name__)

WARMUP_STEPS = 5


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 2e-5
    batch_size: int = 16
    seq_len: int = 64
    max_steps: int = 1000
    eval_interval: int = 100
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip_norm: float = 1.0
    seed: int = 0
    eval_windows: Optional[int] = None
    target_loss: Optional[float] = None

    def __post_init__(self):
        for name in ("batch_size", "seq_len", "eval_interval"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                raise ContractError(f"TrainConfig.{name} must be a positive integer, got {v!r}")
        if not isinstance(self.max_steps, int) or self.max_steps < 0:
            raise ContractError(f"TrainConfig.max_steps must be >= 0, got {self.max_steps!r}")
        if not self.lr >= 0:
            raise ContractError(f"TrainConfig.lr must be >= 0, got {self.lr!r}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1 and self.eps > 0):
            raise ContractError("TrainConfig: need 0 <= beta1, beta2 < 1 and eps > 0")
        if self.target_loss is not None and not self.target_loss > 0:
            raise ContractError(f"TrainConfig.target_loss must be positive or null, got {self.target_loss!r}")
        if self.eval_windows is not None and self.eval_windows < 1:
            raise ContractError(f"TrainConfig.eval_windows must be positive or null, got {self.eval_windows!r}")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        return config_from_dict(cls, data)


def make_optimizer(model, cfg: TrainConfig) -> Adam:
    return Adam(model.parameters(), lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps)


def batch_for_step(stream: np.ndarray, cfg: TrainConfig, step: int):
    """The batch used at ``step``; a pure function of (seed, step) so runs resume exactly."""
    rng = np.random.default_rng([cfg.seed, step])
    return sample_batch(stream, cfg.seq_len, cfg.batch_size, rng)


def train_step(model, optimizer: Adam, batch, clip_norm: float = 1.0) -> float:
    """Forward, backward, clip, update. Returns the batch loss (before the update)."""
    optimizer.zero_grad()
    loss = cross_entropy(model(batch.inputs), batch.targets)
    value = float(loss.data)
    if not math.isfinite(value):
        raise NumericError(f"training loss is {value}")
    backward(loss)
    clip_grad_norm(optimizer.params, clip_norm)
    optimizer.step()
    return value


def evaluate(model, stream: np.ndarray, m: int, batch_size: int = 16,
             max_windows: int | None = None) -> float:
    """Mean cross-entropy over consecutive non-overlapping windows of length ``m``."""
    total, count = 0.0, 0
    with no_grad():
        for batch in window_batches(stream, m, batch_size, max_windows):
            rows = batch.inputs.shape[0]
            total += float(cross_entropy(model(batch.inputs), batch.targets).data) * rows
            count += rows
    return total / count


def time_steps(model, stream: np.ndarray, cfg: TrainConfig, steps: int = 20,
               warmup: int = WARMUP_STEPS) -> float:
    """Median wall-clock milliseconds of a full training step, after ``warmup`` untimed steps."""
    opt = make_optimizer(model, cfg)
    times = []
    for i in range(warmup + steps):
        batch = batch_for_step(stream, cfg, i)
        t0 = time.perf_counter()
        train_step(model, opt, batch, cfg.clip_norm)
        if i >= warmup:
            times.append((time.perf_counter() - t0) * 1e3)
    return float(np.median(times))


def train(model, streams: CorpusStreams, cfg: TrainConfig, out_dir=None, metrics_path=None,
          resume: tuple | None = None, tokenizer_hash: str = "",
          run_config: dict | None = None) -> list[MetricsRecord]:
    """Train with Adam on random windows of the train stream.

    Every ``eval_interval`` steps (and at step 0) a train and a test record
    are emitted; ``last.ckpt`` is written at each of those points and
    ``best.ckpt`` whenever the test loss improves. With ``target_loss`` set,
    training stops at the first evaluation whose train loss is below it. ``resume`` is the
    ``(meta, tensors)`` pair of a checkpoint written by this function, with
    ``model`` already holding its weights. ``run_config`` is echoed into
    every checkpoint under the key ``"run"``.
    """
    if cfg.seq_len > model.config.m_max:
        raise ContractError(f"seq_len {cfg.seq_len} exceeds model m_max {model.config.m_max}")
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    opt = make_optimizer(model, cfg)
    n_params = model.num_parameters()
    start, best = 0, math.inf
    if resume is not None:
        meta, tensors = resume
        opt.load_state(tensors, meta["optimizer_step"])
        start = meta["step"]
        best = meta.get("best_test_loss", math.inf)
        if best is None:
            best = math.inf
    writer = MetricsWriter(metrics_path, append=resume is not None)
    history: list[MetricsRecord] = []

    def checkpoint(name, step):
        if out_dir is not None:
            extra = {"best_test_loss": best if math.isfinite(best) else None}
            if run_config is not None:
                extra["run"] = run_config
            save_training_state(out_dir / name, model, opt, step, cfg.to_dict(), tokenizer_hash, extra)

    def emit(step, train_loss, ms):
        nonlocal best
        test_loss = evaluate(model, streams.test, cfg.seq_len, cfg.batch_size, cfg.eval_windows)
        if not math.isfinite(test_loss):
            checkpoint("last.ckpt", step)
            raise NumericError(f"test loss is {test_loss} at step {step}")
        for split, value in (("train", train_loss), ("test", test_loss)):
            rec = MetricsRecord(step, split, float(value), float(ms), n_params)
            writer.write(rec)
            history.append(rec)
        log.info("step %d train %.4f test %.4f (%.1f ms/iter)", step, train_loss, test_loss, ms)
        if test_loss < best:
            best = test_loss
            checkpoint("best.ckpt", step)
        checkpoint("last.ckpt", step)

    if resume is None:
        probe = batch_for_step(streams.train, cfg, 0)
        t0 = time.perf_counter()
        loss = cross_entropy(model(probe.inputs), probe.targets)
        backward(loss)
        probe_ms = (time.perf_counter() - t0) * 1e3
        opt.zero_grad()
        emit(0, float(loss.data), probe_ms)

    losses, times = [], []
    for step in range(start + 1, cfg.max_steps + 1):
        batch = batch_for_step(streams.train, cfg, step)
        t0 = time.perf_counter()
        try:
            losses.append(train_step(model, opt, batch, cfg.clip_norm))
        except NumericError:
            checkpoint("last.ckpt", step - 1)
            raise
        times.append((step - start > WARMUP_STEPS, (time.perf_counter() - t0) * 1e3))
        if step % cfg.eval_interval == 0 or step == cfg.max_steps:
            timed = [t for warm, t in times if warm] or [t for _, t in times]
            train_loss = float(np.mean(losses))
            emit(step, train_loss, float(np.median(timed)))
            losses, times = [], []
            if cfg.target_loss is not None and train_loss < cfg.target_loss:
                log.info("train loss %.4f below target %.4f; stopping", train_loss, cfg.target_loss)
                break
    return history
