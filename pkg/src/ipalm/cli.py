"""Command-line entry point: ``ipalm <command> ...``.

Exit codes: 0 success, 2 invalid configuration or arguments, 3 numeric
failure (NaN, divergence, failed gradient check), 4 I/O error.
"""
from __future__ import annotations

import argparse
import contextlib
import dataclasses
import json
import logging
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .errors import ContractError, NumericError
from .gpt import GPTConfig, param_count_gpt
from .ipa import ModelConfig, param_count_ipa
from .ipa.config import config_from_dict
from .tokenizer import Tokenizer, bpe_train
from .train import (
    TrainConfig,
    cross_entropy,
    encode_lines,
    evaluate,
    generate,
    load_corpus,
    load_training_state,
    train,
)
from .train.metrics import MetricsRecord
from .train.state import MODEL_KINDS, build_model

log = logging.getLogger("ipalm")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4
GRADCHECK_LIMIT = 1e-4
TOKENIZER_FILE = "tokenizer.txt"


@dataclass
class RunConfig:
    """Everything ``ipalm train`` needs, read from one JSON file.

    Relative paths are resolved against the directory holding the file.
    ``corpus`` is one text file (split by ``splits``) or a list of three
    pre-split files. Without ``tokenizer`` a BPE vocabulary of
    ``model.vocab_size`` tokens is trained on the training text and saved
    next to the checkpoints.
    """

    model_kind: str
    model: dict
    train: dict
    corpus: Union[str, list]
    out_dir: str
    splits: list = field(default_factory=lambda: [0.8, 0.1, 0.1])
    tokenizer: Optional[str] = None
    metrics: Optional[str] = None
    seed: int = 0

    def __post_init__(self):
        if self.model_kind not in MODEL_KINDS:
            raise ContractError(f"model_kind must be one of {sorted(MODEL_KINDS)}, got {self.model_kind!r}")
        if not isinstance(self.model, dict) or not isinstance(self.train, dict):
            raise ContractError("'model' and 'train' must be JSON objects")
        self.model_config = MODEL_KINDS[self.model_kind][0].from_dict(self.model)
        self.train_config = TrainConfig.from_dict(self.train)
        if self.train_config.seq_len > self.model_config.m_max:
            raise ContractError(f"train.seq_len={self.train_config.seq_len} exceeds model.m_max="
                                f"{self.model_config.m_max}")
        if not (isinstance(self.corpus, str) or (isinstance(self.corpus, list) and len(self.corpus) == 3)):
            raise ContractError("corpus must be a path or a list of three paths (train, valid, test)")
        if len(self.splits) != 3 or min(self.splits) < 0 or abs(sum(self.splits) - 1) > 1e-9:
            raise ContractError(f"splits must be three non-negative fractions summing to 1, got {self.splits}")
        if not isinstance(self.seed, int) or isinstance(self.seed, bool):
            raise ContractError(f"seed must be an integer, got {self.seed!r}")

    def to_dict(self) -> dict:
        """The fully resolved configuration, defaults included."""
        out = {f.name: getattr(self, f.name) for f in dataclasses.fields(self)}
        out["model"] = self.model_config.to_dict()
        out["train"] = self.train_config.to_dict()
        return out

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ContractError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(data, dict):
            raise ContractError(f"{path}: top level must be a JSON object")
        cfg = config_from_dict(cls, data)
        cfg.base = path.parent
        return cfg

    def resolve(self, p):
        if p is None:
            return None
        p = Path(p)
        return p if p.is_absolute() else getattr(self, "base", Path(".")) / p


# ------------------------------------------------------------------ commands

def cmd_tokenizer_train(args) -> int:
    corpus = Path(args.corpus).read_bytes()
    t0 = time.perf_counter()
    tok = bpe_train(corpus, args.vocab)
    tok.save(args.out)
    print(f"trained {tok.vocab_size} tokens ({len(tok.merges)} merges) in "
          f"{time.perf_counter() - t0:.1f}s -> {args.out}")
    return EXIT_OK


def _tokenizer_for(cfg: RunConfig, corpus_paths, out_dir: Path) -> Tokenizer:
    if cfg.tokenizer is not None:
        tok = Tokenizer.load(cfg.resolve(cfg.tokenizer))
    else:
        first = corpus_paths if isinstance(corpus_paths, Path) else corpus_paths[0]
        text = first.read_bytes()
        if isinstance(corpus_paths, Path):
            text = text[: int(len(text) * cfg.splits[0])]
        tok = bpe_train(text, cfg.model_config.vocab_size)
    if tok.vocab_size > cfg.model_config.vocab_size:
        raise ContractError(f"tokenizer has {tok.vocab_size} tokens but model.vocab_size is "
                            f"{cfg.model_config.vocab_size}")
    tok.save(out_dir / TOKENIZER_FILE)
    return tok


def cmd_train(args) -> int:
    cfg = RunConfig.load(args.config)
    out_dir = cfg.resolve(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    corpus = (cfg.resolve(cfg.corpus) if isinstance(cfg.corpus, str)
              else [cfg.resolve(p) for p in cfg.corpus])
    tok = _tokenizer_for(cfg, corpus, out_dir)
    streams = load_corpus(corpus, tuple(cfg.splits), tokenizer=tok)
    log.info("corpus: %d train / %d valid / %d test tokens, vocab %d",
             len(streams.train), len(streams.valid), len(streams.test), tok.vocab_size)

    resume = None
    if args.resume:
        model, meta, tensors = load_training_state(args.resume)
        if meta.get("model_kind") != cfg.model_kind or meta.get("model") != cfg.model_config.to_dict():
            raise ContractError("--resume checkpoint was written with a different model config")
        if meta.get("tokenizer_hash") != tok.fingerprint():
            raise ContractError("--resume checkpoint was written with a different tokenizer")
        resume = (meta, tensors)
    else:
        model = build_model(cfg.model_kind, cfg.model_config.to_dict(), seed=cfg.seed)
    metrics = cfg.resolve(cfg.metrics) if cfg.metrics else out_dir / "metrics.jsonl"
    hist = train(model, streams, cfg.train_config, out_dir=out_dir, metrics_path=metrics,
                 resume=resume, tokenizer_hash=tok.fingerprint(), run_config=cfg.to_dict())
    if hist:
        last = {r.split: r for r in hist if r.step == hist[-1].step}
        print(f"step {hist[-1].step}: train {last['train'].loss:.4f} test {last['test'].loss:.4f} "
              f"({hist[-1].ms_per_iter:.1f} ms/iter, {hist[-1].params} params)")
    return EXIT_OK


def _load_checkpoint_and_tokenizer(args):
    model, meta, _ = load_training_state(args.checkpoint)
    tok_path = Path(args.tokenizer) if args.tokenizer else Path(args.checkpoint).parent / TOKENIZER_FILE
    tok = Tokenizer.load(tok_path)
    if meta.get("tokenizer_hash") and meta["tokenizer_hash"] != tok.fingerprint():
        raise ContractError(f"tokenizer {tok_path} does not match the checkpoint")
    return model, meta, tok


def cmd_eval(args) -> int:
    model, meta, tok = _load_checkpoint_and_tokenizer(args)
    stream = encode_lines(tok, Path(args.corpus).read_bytes())
    t0 = time.perf_counter()
    loss = evaluate(model, stream, args.m, args.batch_size)
    windows = (len(stream) - 1) // args.m
    ms = (time.perf_counter() - t0) * 1e3 / max(1, -(-windows // args.batch_size))
    rec = MetricsRecord(int(meta.get("step", 0)), "eval", loss, ms, model.num_parameters())
    print(rec.to_json())
    if args.metrics:
        with open(args.metrics, "a") as fh:
            fh.write(rec.to_json() + "\n")
    return EXIT_OK


def cmd_generate(args) -> int:
    model, _, tok = _load_checkpoint_and_tokenizer(args)
    prompt = tok.encode(args.prompt)
    ids = generate(model, prompt, args.max_new, args.temperature, args.seed)
    sys.stdout.write(tok.decode(ids).decode("utf-8", errors="replace") + "\n")
    return EXIT_OK


def gradcheck_model(kind: str, seed: int):
    """The tiny 64-bit model and batch used by ``ipalm gradcheck``."""
    if kind == "ipa":
        config = ModelConfig(vocab_size=20, n=8, m_max=6, n_layers=2, p_col=2, p_row=2, k=3)
    else:
        config = GPTConfig(vocab_size=20, n=8, n_heads=2, d_ff=16, m_max=6, n_layers=2)
    model = build_model(kind, config.to_dict(), seed=seed)
    rng = np.random.default_rng(seed)
    for p in model.parameters():          # move biases off zero so every term is exercised
        if not np.any(p.data):
            p.data[...] = rng.normal(scale=0.3, size=p.shape)
    ids = rng.integers(0, 20, size=6)
    targets = rng.integers(0, 20, size=6)
    return model, ids, targets


def cmd_gradcheck(args) -> int:
    from .autodiff import grad_check

    model, ids, targets = gradcheck_model(args.model_kind, args.seed)
    t0 = time.perf_counter()
    err = grad_check(lambda: cross_entropy(model(ids), targets), model.parameters(), epsilon=args.epsilon)
    print(f"{args.model_kind}: max relative error {err:.3e} over {model.num_parameters()} parameters "
          f"({time.perf_counter() - t0:.1f}s)")
    return EXIT_OK if err <= GRADCHECK_LIMIT else EXIT_NUMERIC


def matched_configs(kind: str, model: dict) -> tuple[ModelConfig, GPTConfig]:
    """An (IPA, GPT) pair with H = P_col, n/H = k and d_ff = P_row * n."""
    if kind == "ipa":
        ipa = ModelConfig.from_dict(model)
        gpt = GPTConfig(n=ipa.n, n_heads=ipa.p_col, d_ff=ipa.p_row * ipa.n, n_layers=ipa.n_layers,
                        m_max=ipa.m_max, vocab_size=ipa.vocab_size, tie_head=ipa.tie_head,
                        layernorm=ipa.layernorm, precision=ipa.precision)
    else:
        gpt = GPTConfig.from_dict(model)
        if gpt.d_ff % gpt.n:
            raise ContractError(f"d_ff={gpt.d_ff} is not a multiple of n={gpt.n}; no matched IPA config")
        ipa = ModelConfig(n=gpt.n, p_col=gpt.n_heads, k=gpt.head_dim, p_row=gpt.d_ff // gpt.n,
                          n_layers=gpt.n_layers, m_max=gpt.m_max, vocab_size=gpt.vocab_size,
                          tie_head=gpt.tie_head, layernorm=gpt.layernorm, precision=gpt.precision)
    return ipa, gpt


def param_table(kind: str, model: dict, lengths) -> list[tuple[str, list[int]]]:
    ipa, gpt = matched_configs(kind, model)
    top = max(lengths)
    ipa = dataclasses.replace(ipa, m_max=max(ipa.m_max, top))
    gpt = dataclasses.replace(gpt, m_max=max(gpt.m_max, top))
    return [("ipa", [param_count_ipa(ipa, m) for m in lengths]),
            ("gpt", [param_count_gpt(gpt, m) for m in lengths])]


def cmd_params(args) -> int:
    data = json.loads(Path(args.config).read_text())
    if "model_kind" in data:
        cfg = RunConfig.load(args.config)
        kind, model = cfg.model_kind, cfg.model_config.to_dict()
    else:
        kind = data.pop("kind", "ipa")
        model = data
    rows = param_table(kind, model, args.m)
    header = ["kind"] + [f"m={m}" for m in args.m]
    if len(args.m) > 1:
        header.append(f"delta({args.m[0]}->{args.m[-1]})")
    print("\t".join(header))
    for name, counts in rows:
        cells = [name] + [str(c) for c in counts]
        if len(args.m) > 1:
            cells.append(str(counts[-1] - counts[0]))
        print("\t".join(cells))
    return EXIT_OK


# --------------------------------------------------------------------- main

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ipalm", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("tokenizer-train", help="train a BPE tokenizer on a text file")
    p.add_argument("--corpus", required=True)
    p.add_argument("--vocab", type=int, default=8192)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_tokenizer_train)

    p = sub.add_parser("train", help="train a model from a JSON run config")
    p.add_argument("--config", required=True)
    p.add_argument("--resume", help="checkpoint to continue from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="mean next-token loss of a checkpoint on a text file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--m", type=int, required=True, help="window length")
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--tokenizer", help=f"defaults to {TOKENIZER_FILE} next to the checkpoint")
    p.add_argument("--metrics", help="also append the JSONL record to this file")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("generate", help="sample a continuation of a prompt")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--prompt", required=True)
    p.add_argument("--max-new", type=int, default=100)
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tokenizer", help=f"defaults to {TOKENIZER_FILE} next to the checkpoint")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("gradcheck", help="finite-difference check of a tiny model")
    p.add_argument("--model-kind", choices=sorted(MODEL_KINDS), required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epsilon", type=float, default=1e-5)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("params", help="parameter counts of matched IPA and GPT models")
    p.add_argument("--config", required=True, help="run config, or a bare model config")
    p.add_argument("--m", type=int, nargs="+", required=True, help="one or more sequence lengths")
    p.set_defaults(func=cmd_params)
    return parser


def thread_limit():
    """Context manager honouring ``IPA_THREADS`` (needs threadpoolctl)."""
    value = os.environ.get("IPA_THREADS")
    if not value:
        return contextlib.nullcontext()
    try:
        limit = int(value)
    except ValueError:
        raise ContractError(f"IPA_THREADS must be an integer, got {value!r}") from None
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:
        log.warning("IPA_THREADS is set but threadpoolctl is not installed; ignoring")
        return contextlib.nullcontext()
    return threadpool_limits(limits=limit)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(asctime)s %(levelname)s %(message)s", stream=sys.stderr)
    try:
        with thread_limit():
            return args.func(args)
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ContractError, ValueError, KeyError, IndexError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
