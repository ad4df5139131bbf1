"""Mini-batch Adam training with epoch-level validation and checkpointing.

Two loss conventions are tracked everywhere:

* ``loss`` - per-sample squared L2 error norm averaged over samples (the
  figure the acceptance criteria and reports use);
* ``loss_per_element`` - the same divided by the per-sample element count.

Gradient steps use the per-element form so one learning rate behaves the same
at every resolution and channel count.
"""
from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .dataset import ArrayDataset
from .net import ModelSpec, R2Net, build_model
from .tensor import AdamState, RandomStream, Tensor, adam_step, load_checkpoint, no_grad, ops, save_checkpoint

SHUFFLE_TAG = 7_000_001
DROPOUT_TAG = 7_000_002


class TrainingDiverged(FloatingPointError):
    def __init__(self, epoch: int, batch_index: int, value: float):
        super().__init__(f"non-finite training loss {value} at epoch {epoch}, batch {batch_index}")
        self.epoch = epoch
        self.batch_index = batch_index


@dataclass
class TrainConfig:
    lr: float = 1e-4
    epochs: int = 50
    batch_size: int = 2
    seed: int = 0
    eval_batch_size: int = 8

    def __post_init__(self):
        if self.lr < 0 or not math.isfinite(self.lr):
            raise ValueError(f"learning rate must be finite and non-negative, got {self.lr}")
        if self.epochs < 0 or self.batch_size < 1 or self.eval_batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch sizes >= 1")


@dataclass
class Checkpoint:
    spec: ModelSpec
    config: TrainConfig
    weights: dict
    best_weights: dict
    optimizer: AdamState
    epoch: int = 0  # completed epochs
    history: list = field(default_factory=list)  # per epoch: losses only (no wall time)
    best_epoch: int = -1
    dropout_state: dict | None = None

    @property
    def best_val_loss(self) -> float:
        return self.history[self.best_epoch]["val_loss"] if self.best_epoch >= 0 else math.inf

    def save(self, path) -> None:
        tensors = {f"model/{k}": v for k, v in self.weights.items()}
        tensors.update({f"best/{k}": v for k, v in self.best_weights.items()})
        tensors.update({f"adam_m/{i:04d}": m for i, m in enumerate(self.optimizer.m)})
        tensors.update({f"adam_v/{i:04d}": v for i, v in enumerate(self.optimizer.v)})
        meta = {
            "spec": json.loads(self.spec.to_json()),
            "config": asdict(self.config),
            "optimizer": self.optimizer.scalars(),
            "epoch": self.epoch,
            "history": self.history,
            "best_epoch": self.best_epoch,
            "dropout_state": self.dropout_state,
        }
        save_checkpoint(path, tensors, meta)

    @classmethod
    def load(cls, path) -> "Checkpoint":
        tensors, meta = load_checkpoint(path)

        def group(prefix):
            return {k[len(prefix):]: v for k, v in tensors.items() if k.startswith(prefix)}

        m = [v for _, v in sorted(group("adam_m/").items())]
        v = [v for _, v in sorted(group("adam_v/").items())]
        opt = AdamState(**meta["optimizer"], m=m, v=v)
        return cls(spec=ModelSpec.from_json(json.dumps(meta["spec"])), config=TrainConfig(**meta["config"]),
                   weights=group("model/"), best_weights=group("best/"), optimizer=opt, epoch=meta["epoch"],
                   history=meta["history"], best_epoch=meta["best_epoch"], dropout_state=meta["dropout_state"])


def _batches(n: int, batch_size: int, order=None):
    order = np.arange(n) if order is None else order
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def validate(model: R2Net, data: ArrayDataset, batch_size: int = 8) -> dict:
    """Eval-mode losses over a split; independent of batch size and sample order."""
    was_training = model.training
    model.eval()
    sq = np.zeros(len(data))
    try:
        with no_grad():
            for idx in _batches(len(data), batch_size):
                out = model(Tensor(data.inputs[idx])).data.astype(np.float64)
                diff = out - data.targets[idx].astype(np.float64)
                sq[idx] = (diff.reshape(len(idx), -1) ** 2).sum(axis=1)
    finally:
        model.train(was_training)
    per_sample_elems = int(np.prod(data.targets.shape[1:]))
    # sorted summation keeps the result independent of the sample order
    total = math.fsum(np.sort(sq))
    return {"loss": total / len(data), "loss_per_element": total / len(data) / per_sample_elems}


def predict(model: R2Net, inputs: np.ndarray, batch_size: int = 8) -> np.ndarray:
    was_training = model.training
    model.eval()
    outs = []
    try:
        with no_grad():
            for idx in _batches(len(inputs), batch_size):
                outs.append(model(Tensor(inputs[idx])).data)
    finally:
        model.train(was_training)
    return np.concatenate(outs)


def _param_list(model):
    return [p for _, p in model.named_parameters()]


def train(model: R2Net, train_data: ArrayDataset, val_data: ArrayDataset, cfg: TrainConfig,
          resume: Checkpoint | None = None, checkpoint_dir=None, log_path=None, on_epoch=None) -> Checkpoint:
    """Run epochs ``resume.epoch .. cfg.epochs - 1`` and return the final checkpoint.

    The per-epoch shuffle is a pure function of (seed, epoch) and the dropout
    stream state is checkpointed, so resuming reproduces an uninterrupted run.
    With ``checkpoint_dir`` the state after every epoch is written to
    ``last.json`` (it carries the best-validation weights too); with
    ``log_path`` a JSON metrics log is rewritten each epoch. Wall times only
    reach ``on_epoch``, so every file written is a pure function of the inputs.
    """
    params = _param_list(model)
    if resume is None:
        ckpt = Checkpoint(spec=model.spec, config=cfg, weights=model.state_dict(), best_weights=model.state_dict(),
                          optimizer=AdamState(lr=cfg.lr))
        dropout = RandomStream(cfg.seed).spawn(DROPOUT_TAG)
    else:
        ckpt = resume
        model.load_state_dict(resume.weights)
        ckpt.optimizer.lr = cfg.lr
        ckpt.config = cfg
        dropout = RandomStream.from_state(resume.dropout_state)
    model.set_rng(dropout)
    opt = ckpt.optimizer
    log = []
    if log_path is not None and Path(log_path).exists() and resume is not None:
        log = [e for e in json.loads(Path(log_path).read_text())["epochs"] if e["epoch"] < ckpt.epoch]

    n = len(train_data)
    per_sample_elems = int(np.prod(train_data.targets.shape[1:]))
    for epoch in range(ckpt.epoch, cfg.epochs):
        start = time.perf_counter()
        model.train()
        order = RandomStream(cfg.seed).spawn(SHUFFLE_TAG + epoch).permutation(n)
        sq_total = 0.0
        for b, idx in enumerate(_batches(n, cfg.batch_size, order)):
            x = Tensor(train_data.inputs[idx])
            y = train_data.targets[idx]
            model.zero_grad()
            out = model(x)
            loss = ops.mse_loss(out, y, per_element=True)
            value = float(loss.data)
            if not math.isfinite(value):
                raise TrainingDiverged(epoch, b, value)
            loss.backward()
            adam_step([p.data for p in params], [p.grad for p in params], opt)
            sq_total += value * per_sample_elems * len(idx)
        train_loss = sq_total / n
        val = validate(model, val_data, cfg.eval_batch_size)
        record = {"epoch": epoch, "train_loss": train_loss, "train_loss_per_element": train_loss / per_sample_elems,
                  "val_loss": val["loss"], "val_loss_per_element": val["loss_per_element"]}
        ckpt.history.append(record)
        ckpt.epoch = epoch + 1
        ckpt.weights = model.state_dict()
        if val["loss"] < ckpt.best_val_loss:
            ckpt.best_epoch = epoch
            ckpt.best_weights = model.state_dict()
        ckpt.dropout_state = dropout.state()
        if checkpoint_dir is not None:
            d = Path(checkpoint_dir)
            d.mkdir(parents=True, exist_ok=True)
            ckpt.save(d / "last.json")
        log.append({**record, "best_epoch": ckpt.best_epoch})
        if log_path is not None:
            Path(log_path).write_text(json.dumps({"epochs": log}, indent=1, sort_keys=True) + "\n")
        if on_epoch is not None:
            on_epoch({**record, "wall_time_s": time.perf_counter() - start})
    if ckpt.best_epoch < 0:
        ckpt.best_weights = model.state_dict()
    return ckpt


def model_from_checkpoint(ckpt: Checkpoint, best: bool = True) -> R2Net:
    model = build_model(ckpt.spec, seed=ckpt.config.seed)
    model.load_state_dict(ckpt.best_weights if best else ckpt.weights)
    model.eval()
    return model


def infer(ckpt: Checkpoint, image_stack: np.ndarray, batch_size: int = 8) -> np.ndarray:
    """Estimated maps for (C_in, N, N) or (B, C_in, N, N) inputs; raw, unclamped."""
    x = np.asarray(image_stack, dtype=np.float32)
    single = x.ndim == 3
    out = predict(model_from_checkpoint(ckpt), x[None] if single else x, batch_size)
    return out[0] if single else out


def new_model(spec: ModelSpec, cfg: TrainConfig) -> R2Net:
    return build_model(spec, seed=cfg.seed)
