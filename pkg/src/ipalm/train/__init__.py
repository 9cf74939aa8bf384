from .checkpoint import dumps_checkpoint, load_checkpoint, loads_checkpoint, save_checkpoint
from .data import Batch, CorpusStreams, encode_lines, load_corpus, sample_batch, window_batches
from .generate import generate
from .loop import TrainConfig, batch_for_step, evaluate, make_optimizer, time_steps, train, train_step
from .loss import cross_entropy
from .metrics import MetricsRecord, MetricsWriter, read_metrics
from .optim import Adam, adam_step, clip_grad_norm
from .state import build_model, load_training_state, save_training_state

__all__ = [
    "dumps_checkpoint", "load_checkpoint", "loads_checkpoint", "save_checkpoint", "Batch",
    "CorpusStreams", "encode_lines", "load_corpus", "sample_batch", "window_batches", "generate",
    "TrainConfig", "batch_for_step", "evaluate", "make_optimizer", "time_steps", "train",
    "train_step", "cross_entropy", "MetricsRecord", "MetricsWriter", "read_metrics", "Adam",
    "adam_step", "clip_grad_norm", "build_model", "load_training_state", "save_training_state",
]
