"""Optimization loop and checkpointing.

Training runs shuffled mini-batches of per-example span losses, clips the
global gradient norm, and applies bias-corrected Adam. After each epoch
the dev set is scored; when dev EM fails to improve on the running best
the learning rate is halved ("bad checkpoint" rule) and the best-scoring
parameters stay on disk. Everything is driven by seeded generators, so a
fixed seed fixes initialization, batch order, dropout masks, and therefore
the entire metric log.
"""

import base64
import json
import logging
import os
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .conductor import build_model, example_loss, forward
from .config import RunConfig, config_hash, to_text
from .data import evaluate
from .errors import CheckpointError, DataError, NumericsError
from .features import EmbeddingSpec
from .tensor import backward

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1


@dataclass
class AdamState:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params, state):
    """Bias-corrected Adam over every parameter with a gradient."""
    for name, t in params.items():
        if t.grad is not None and not np.isfinite(t.grad).all():
            raise NumericsError(f"non-finite gradient in parameter {name}")
    state.step += 1
    bc1 = 1.0 - state.beta1 ** state.step
    bc2 = 1.0 - state.beta2 ** state.step
    for name, t in params.items():
        g = t.grad
        if g is None:
            continue
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(t.data)
        v = state.v.get(name)
        if v is None:
            v = state.v[name] = np.zeros_like(t.data)
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        t.data -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)


def clip_gradients(params, max_norm):
    """Scale all gradients so their global L2 norm is at most max_norm."""
    total = 0.0
    for _, t in params.items():
        if t.grad is not None:
            total += float((t.grad * t.grad).sum())
    norm = total ** 0.5
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / norm
        for _, t in params.items():
            if t.grad is not None:
                t.grad = t.grad * scale
    return norm


def predict(model, examples):
    """Answer texts decoded from the last-hop distributions."""
    out = {}
    for ex in examples:
        span = forward(model, ex).span
        out[ex.id] = ex.span_text(span.start, span.end)
    return out


def evaluate_model(model, examples):
    return evaluate(predict(model, examples), examples)


@dataclass
class TrainResult:
    history: list
    best_dev_em: float
    best_epoch: int
    status: str                   # "completed" | "early_stop" | "halted_nonfinite"
    checkpoint_path: str = None
    best_params: dict = None


def train(model, train_examples, dev_examples, config, run_dir=None):
    """Optimize the model; returns the metric history and the best checkpoint."""
    if not train_examples:
        raise DataError("training set is empty")
    if not dev_examples:
        raise DataError("dev set is empty")
    for ex in train_examples:
        if not ex.gold_spans:
            raise DataError(f"training example {ex.id} has no gold span")

    seeds = np.random.SeedSequence(config.seed).spawn(2)
    shuffle_rng = np.random.default_rng(seeds[0])
    dropout_rng = np.random.default_rng(seeds[1])
    state = AdamState(lr=config.lr)

    ckpt_path = None
    if run_dir is not None:
        os.makedirs(run_dir, exist_ok=True)
        with open(os.path.join(run_dir, "effective.cfg"), "w", encoding="utf-8") as fh:
            fh.write(to_text(config))
        ckpt_path = os.path.join(run_dir, "best.ckpt")

    history = []
    best_em, best_epoch, best_params = -1.0, 0, None
    status = "completed"
    n = len(train_examples)

    for epoch in range(1, config.epochs + 1):
        order = shuffle_rng.permutation(n)
        batch_losses = []
        halted = False
        for lo in range(0, n, config.batch_size):
            batch = order[lo:lo + config.batch_size]
            model.params.zero_grads()
            total = None
            for idx in batch:
                loss, _ = example_loss(model, train_examples[idx], rng=dropout_rng)
                total = loss if total is None else T.add(total, loss)
            batch_loss = T.mul_const(total, 1.0 / len(batch))
            if not np.isfinite(batch_loss.data):
                log.error("non-finite loss at epoch %d; halting with best checkpoint "
                          "from epoch %d", epoch, best_epoch)
                status = "halted_nonfinite"
                halted = True
                break
            backward(batch_loss)
            model.params.apply_grad_masks()
            clip_gradients(model.params, config.grad_clip)
            adam_step(model.params, state)
            batch_losses.append(float(batch_loss.data))
        if halted:
            break

        dev_result = evaluate_model(model, dev_examples)
        row = {
            "epoch": epoch,
            "train_loss": float(np.mean(batch_losses)),
            "dev_em": dev_result.em,
            "dev_f1": dev_result.f1,
            "lr": state.lr,
        }
        history.append(row)

        if dev_result.em > best_em:
            best_em, best_epoch = dev_result.em, epoch
            best_params = {k: t.data.copy() for k, t in model.params.items()}
            if ckpt_path is not None:
                save_checkpoint(model, state, ckpt_path,
                                epoch=epoch, best_dev_em=best_em,
                                lr_history=[r["lr"] for r in history])
        else:
            state.lr /= 2.0  # bad checkpoint: dev EM did not improve

        if run_dir is not None:
            write_metrics_csv(history, os.path.join(run_dir, "metrics.csv"))

        if _early_stop(model, train_examples, dev_result, config):
            status = "early_stop"
            break

    return TrainResult(history=history, best_dev_em=best_em, best_epoch=best_epoch,
                       status=status, checkpoint_path=ckpt_path,
                       best_params=best_params)


def _early_stop(model, train_examples, dev_result, config):
    if config.early_stop_dev_em <= 0:
        return False
    if dev_result.em < config.early_stop_dev_em:
        return False
    if config.early_stop_train_em > 0:
        train_em = evaluate_model(model, train_examples).em
        if train_em < config.early_stop_train_em:
            return False
    return True


def write_metrics_csv(history, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epoch,train_loss,dev_em,dev_f1,lr\n")
        for row in history:
            fh.write(f"{row['epoch']},{row['train_loss']:.6f},{row['dev_em']:.4f},"
                     f"{row['dev_f1']:.4f},{row['lr']:.10g}\n")


# ---------------------------------------------------------------------------
# Checkpoints

def _encode(arr):
    return base64.b64encode(np.ascontiguousarray(arr, dtype="<f8").tobytes()).decode("ascii")


def _decode(payload, shape):
    flat = np.frombuffer(base64.b64decode(payload), dtype="<f8")
    expected = int(np.prod(shape)) if shape else 1
    if flat.size != expected:
        raise CheckpointError(f"array payload has {flat.size} values, expected {expected}")
    return flat.reshape(shape).copy()


def save_checkpoint(model, state, path, epoch=0, best_dev_em=0.0, lr_history=()):
    payload = {
        "format_version": CHECKPOINT_VERSION,
        "config_hash": model.config_hash,
        "config": {k: getattr(model.config, k) for k in vars(model.config)},
        "path": model.path.render(),
        "epoch": epoch,
        "best_dev_em": best_dev_em,
        "lr_history": list(lr_history),
        "vocab": {
            "word_tokens": model.word_spec.tokens,
            "word_trainable": [int(b) for b in model.word_spec.trainable],
            "char_vocab": model.char_vocab,
            "pos_vocab": model.pos_vocab,
            "ner_vocab": model.ner_vocab,
        },
        "params": {name: {"shape": list(t.data.shape), "data": _encode(t.data)}
                   for name, t in model.params.items()},
        "adam": {
            "lr": state.lr,
            "beta1": state.beta1,
            "beta2": state.beta2,
            "eps": state.eps,
            "step": state.step,
            "m": {k: _encode(a) for k, a in state.m.items()},
            "v": {k: _encode(a) for k, a in state.v.items()},
        },
    }
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)
    os.replace(tmp, path)


def load_checkpoint(path, expected_config_hash=None):
    """Read a checkpoint payload; verifies integrity and the config hash."""
    try:
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"{path}: truncated or corrupt checkpoint: {exc}") from None
    if payload.get("format_version") != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"{path}: unsupported checkpoint version {payload.get('format_version')}")
    for key in ("config", "params", "adam", "vocab", "config_hash"):
        if key not in payload:
            raise CheckpointError(f"{path}: missing checkpoint section '{key}'")
    if expected_config_hash is not None and payload["config_hash"] != expected_config_hash:
        raise CheckpointError(
            f"{path}: checkpoint was produced under a different configuration "
            f"(hash {payload['config_hash'][:12]}... != expected "
            f"{expected_config_hash[:12]}...); refusing to load")
    return payload


def load_into(model, payload):
    """Copy checkpoint parameters into an assembled model."""
    stored = payload["params"]
    names = set(model.params.names())
    if set(stored) != names:
        missing = names - set(stored)
        extra = set(stored) - names
        raise CheckpointError(
            f"parameter sets differ (missing: {sorted(missing)[:3]}, "
            f"unexpected: {sorted(extra)[:3]})")
    for name, t in model.params.items():
        entry = stored[name]
        if tuple(entry["shape"]) != t.data.shape:
            raise CheckpointError(
                f"parameter {name}: checkpoint shape {tuple(entry['shape'])} does not "
                f"match model shape {t.data.shape}")
        t.data[...] = _decode(entry["data"], tuple(entry["shape"]))


def restore_model(path_or_payload):
    """Rebuild the full model (and Adam state) a checkpoint describes."""
    payload = (load_checkpoint(path_or_payload)
               if isinstance(path_or_payload, (str, os.PathLike)) else path_or_payload)
    config = RunConfig(**payload["config"])
    vocab = payload["vocab"]
    trainable = np.array([bool(b) for b in vocab["word_trainable"]])
    word_spec = EmbeddingSpec(
        tokens=list(vocab["word_tokens"]),
        matrix=np.zeros((len(vocab["word_tokens"]), config.word_dim)),
        trainable=trainable)
    model = build_model(payload["path"], config, word_spec, dict(vocab["char_vocab"]),
                        pos_vocab=dict(vocab["pos_vocab"]) or None,
                        ner_vocab=dict(vocab["ner_vocab"]) or None)
    load_into(model, payload)
    adam = payload["adam"]
    state = AdamState(lr=adam["lr"], beta1=adam["beta1"], beta2=adam["beta2"],
                      eps=adam["eps"], step=adam["step"])
    for name, blob in adam["m"].items():
        state.m[name] = _decode(blob, model.params[name].data.shape)
    for name, blob in adam["v"].items():
        state.v[name] = _decode(blob, model.params[name].data.shape)
    return model, state
