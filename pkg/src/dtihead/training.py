"""Training loop, evaluation, prediction and checkpointing.

The loop is single-threaded by contract. Every batch sequence is derived
statelessly from (seed, epoch), so a run interrupted at epoch k and resumed
from its checkpoint replays exactly the batches and updates an uninterrupted
run would have performed, producing bitwise-identical parameters.

Checkpoints are a single binary file: magic "FDTC", version u32, then tagged
sections {tag 4 bytes, length u64, payload}. Readers skip unknown tags, so
the layout is forward-compatible. Sections: PRMS (dims + flat float64
parameter vector), OPTM (optimizer scalars + moment vectors), CONF (the run
configuration plus label statistics and epoch counter as key = value text),
RNGS (the base seed; batch RNG streams are re-derived per epoch).
"""

from __future__ import annotations

import dataclasses
import logging
import math
import os
import struct
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .data import (
    LABEL_BINARY,
    LABEL_REAL,
    SPLIT_NAMES,
    SPLIT_TRAIN,
    SPLIT_VAL,
    EmbeddingStore,
    make_batches,
    split_code,
)
from .errors import (
    CheckpointError,
    DataError,
    LookupError_,
    NumericalAbort,
    ParameterError,
    UsageError,
)
from .metrics import EvalReport, auroc, aupr, pcc, triplet_satisfaction
from .model import (
    FIELDS,
    Gradients,
    ModelParams,
    backward_pairs,
    forward,
    forward_pairs,
    init_params,
)
from .objectives import (
    LossConfig,
    bce_batch,
    huber_batch,
    total_loss,
    triplet_batch,
)
from .optim import OptimState, apply_update, init_optim_state, lr_at

logger = logging.getLogger(__name__)

CKPT_MAGIC = b"FDTC"
CKPT_VERSION = 1

MODES = ("regression", "classification")
ABLATIONS = ("full", "no_film", "no_triplet")


@dataclass
class RunConfig:
    """Hyperparameters and paths for one training run."""

    mode: str = "regression"
    ablation: str = "full"
    epochs: int = 25
    batch_size: int = 24
    peak_lr: float = 5e-5
    warmup_steps: int = 500
    weight_decay: float = 0.1
    alpha: float = 0.9  # triplet margin
    delta: float = 0.5  # Huber threshold
    sigma: float = 0.2  # RBF width, frozen
    k: int = 16  # RBF centers
    d_shared: int = 256
    seed: int = 0
    normalize_labels: bool = True
    triplet_weight: float = 1.0
    norm_eps: float = 1e-12  # 0 selects strict normalization
    store_path: str = ""
    checkpoint_path: str = ""

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ParameterError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.ablation not in ABLATIONS:
            raise ParameterError(
                f"ablation must be one of {ABLATIONS}, got {self.ablation!r}"
            )
        if self.epochs < 1 or self.batch_size < 1:
            raise ParameterError("epochs and batch_size must be >= 1")
        if self.k < 2 or self.d_shared < 1:
            raise ParameterError("k must be >= 2 and d_shared >= 1")
        if self.sigma <= 0 or self.delta <= 0:
            raise ParameterError("sigma and delta must be > 0")
        if self.alpha < 0 or self.triplet_weight < 0 or self.norm_eps < 0:
            raise ParameterError(
                "alpha, triplet_weight and norm_eps must be nonnegative"
            )
        if self.peak_lr < 0 or self.weight_decay < 0 or self.warmup_steps < 0:
            raise ParameterError(
                "peak_lr, weight_decay and warmup_steps must be nonnegative"
            )

    def loss_config(self) -> LossConfig:
        weight = 0.0 if self.ablation == "no_triplet" else self.triplet_weight
        return LossConfig(task=self.mode, huber_delta=self.delta,
                          margin=self.alpha, triplet_weight=weight)

    @property
    def film(self) -> bool:
        return self.ablation != "no_film"


_CONFIG_TYPES = {f.name: f.type for f in dataclasses.fields(RunConfig)}


def config_to_text(config: RunConfig, extra: dict | None = None) -> str:
    """Serialize as flat `key = value` lines (fixed field order)."""
    lines = [f"{f.name} = {_fmt(getattr(config, f.name))}"
             for f in dataclasses.fields(RunConfig)]
    for key, val in (extra or {}).items():
        lines.append(f"{key} = {_fmt(val)}")
    return "\n".join(lines) + "\n"


def _fmt(val) -> str:
    if isinstance(val, bool):
        return "true" if val else "false"
    if isinstance(val, float):
        return repr(val)
    return str(val)


def parse_config_text(text: str) -> dict:
    """Parse flat `key = value` text into a string dict. Blank lines and
    `#` comments are ignored."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise UsageError(f"config line {lineno}: expected key = value, "
                             f"got {raw!r}")
        key, _, val = line.partition("=")
        out[key.strip()] = val.strip()
    return out


def _coerce(name: str, raw: str):
    kind = _CONFIG_TYPES.get(name)
    if kind in ("int", int):
        return int(raw)
    if kind in ("float", float):
        return float(raw)
    if kind in ("bool", bool):
        low = raw.lower()
        if low in ("true", "1", "yes"):
            return True
        if low in ("false", "0", "no"):
            return False
        raise UsageError(f"config key {name}: expected a boolean, got {raw!r}")
    return raw


def config_from_mapping(mapping: dict, base: RunConfig | None = None) -> RunConfig:
    """Apply string key/value overrides onto a config."""
    config = dataclasses.replace(base) if base else RunConfig()
    for key, raw in mapping.items():
        if key not in _CONFIG_TYPES:
            raise UsageError(f"unknown config key {key!r}")
        setattr(config, key, _coerce(key, raw))
    return config


@dataclass
class Checkpoint:
    """Everything needed to resume or serve a trained model."""

    params: ModelParams
    optim: OptimState
    config: RunConfig
    label_mean: float
    label_std: float
    epoch: int  # completed epochs


@dataclass
class EpochLog:
    epoch: int
    mean_loss: float
    mean_task: float
    mean_triplet: float
    lr: float  # learning rate at the last step of the epoch
    n_triplets: int
    skipped_triplets: int
    val: EvalReport | None


@dataclass
class TrainReport:
    epochs: list
    lr_trace: list  # lr actually used at every optimizer step
    n_steps: int
    final_val: EvalReport | None


def write_train_report(report: TrainReport, path: str) -> None:
    """One structured text line per epoch plus a final summary block."""
    def fmt_val(val):
        if val is None:
            return ""
        parts = []
        for key, v in val.as_dict().items():
            if v is not None:
                parts.append(f"val_{key}={_fmt(v)}")
        return " " + " ".join(parts) if parts else ""

    with open(path, "w", encoding="utf-8") as fh:
        for log in report.epochs:
            fh.write(
                f"epoch={log.epoch} loss={_fmt(log.mean_loss)} "
                f"task={_fmt(log.mean_task)} triplet={_fmt(log.mean_triplet)} "
                f"lr={_fmt(log.lr)} triplets={log.n_triplets} "
                f"skipped={log.skipped_triplets}{fmt_val(log.val)}\n"
            )
        fh.write("# final\n")
        fh.write(f"steps={report.n_steps}\n")
        if report.final_val is not None:
            for key, v in report.final_val.as_dict().items():
                if v is not None:
                    fh.write(f"val_{key}={_fmt(v)}\n")


def _film_mask(params: ModelParams) -> np.ndarray:
    """Flat boolean mask over the four FiLM generator tensors."""
    parts = []
    for name, _, _ in FIELDS:
        val = getattr(params, name)
        n = 1 if np.isscalar(val) else val.size
        parts.append(np.full(n, name.startswith("film_"), dtype=bool))
    return np.concatenate(parts)


def _label_stats(store: EmbeddingStore, config: RunConfig):
    """Training-split label mean/std for normalization (identity when off
    or in classification mode, where labels are already 0/1)."""
    if config.mode == "classification" or not config.normalize_labels:
        return 0.0, 1.0
    idx = store.split_record_indices(SPLIT_TRAIN)
    labels = store.rec_label[idx].astype(np.float64)
    labels = labels[~np.isnan(labels)]
    if labels.size == 0:
        raise DataError("train split has no labeled records")
    mean = float(np.mean(labels))
    std = float(np.std(labels))
    return mean, max(std, 1e-8)


def _check_store_for_mode(store: EmbeddingStore, config: RunConfig) -> None:
    if not store.has_splits:
        raise DataError(
            "store has no split tags; assign splits before training"
        )
    if config.mode == "regression" and store.label_kind != LABEL_REAL:
        raise DataError(
            "regression mode needs real-valued labels; this store has "
            f"label_kind={store.label_kind}"
        )
    if config.mode == "classification" and store.label_kind != LABEL_BINARY:
        raise DataError(
            "classification mode needs binary labels; binarize the store "
            f"first (label_kind={store.label_kind})"
        )


def _record_ids(store: EmbeddingStore, batch) -> list:
    return [
        f"{store.drug_ids[int(d)]}:{store.prot_ids[int(p)]}"
        for d, p in zip(batch.pair_drug, batch.pair_prot)
    ]


def train(
    store: EmbeddingStore,
    config: RunConfig,
    stop_after_epoch: int | None = None,
    resume: Checkpoint | None = None,
) -> tuple[Checkpoint, TrainReport]:
    """Run (or continue) a training run on the store's train split.

    ``stop_after_epoch`` halts early while keeping the full-run learning
    rate schedule, producing a checkpoint a later ``resume`` call continues
    bitwise-identically to an uninterrupted run. When resuming, ``config``
    must equal the checkpoint's config.
    """
    config.validate()
    _check_store_for_mode(store, config)
    loss_cfg = config.loss_config()
    use_triplet = loss_cfg.triplet_weight > 0.0

    train_idx = store.split_record_indices(SPLIT_TRAIN)
    train_idx = train_idx[~np.isnan(store.rec_label[train_idx])]
    if train_idx.size == 0:
        raise DataError("train split has no labeled records")
    n_batches = math.ceil(train_idx.size / config.batch_size)
    total_steps = config.epochs * n_batches

    if resume is not None:
        # paths are plumbing, not math: a resumed run may write elsewhere
        def hyper(c):
            d = dataclasses.asdict(c)
            d.pop("store_path")
            d.pop("checkpoint_path")
            return d

        if hyper(resume.config) != hyper(config):
            raise UsageError(
                "resume config differs from the checkpoint's config"
            )
        params = resume.params.copy()
        optim = resume.optim
        label_mean, label_std = resume.label_mean, resume.label_std
        start_epoch = resume.epoch
        if optim.total_steps != total_steps:
            raise UsageError(
                f"checkpoint schedule ({optim.total_steps} steps) does not "
                f"match epochs x batches = {total_steps}"
            )
        if optim.step != start_epoch * n_batches:
            raise CheckpointError(
                f"checkpoint step {optim.step} inconsistent with epoch "
                f"{start_epoch} x {n_batches} batches"
            )
    else:
        label_mean, label_std = _label_stats(store, config)
        params = init_params(
            d_drug=store.d_drug, d_prot=store.d_prot,
            d_shared=config.d_shared, k=config.k, sigma=config.sigma,
            seed=config.seed,
        )
        optim = init_optim_state(
            params, total_steps=total_steps, peak_lr=config.peak_lr,
            warmup_steps=config.warmup_steps,
            weight_decay=config.weight_decay,
        )
        start_epoch = 0

    frozen_extra = _film_mask(params) if config.ablation == "no_film" else None
    drug_matrix = store.drug_matrix.astype(np.float64)
    prot_matrix = store.prot_matrix.astype(np.float64)

    last_epoch = config.epochs if stop_after_epoch is None else \
        max(start_epoch, min(stop_after_epoch, config.epochs))
    epoch_logs = []
    lr_trace = []

    for epoch in range(start_epoch, last_epoch):
        batches = make_batches(store, SPLIT_TRAIN, config.batch_size,
                               config.seed, epoch)
        sum_loss = sum_task = sum_trip = 0.0
        n_trip_total = 0
        n_pos_total = 0
        lr = 0.0
        for bi, batch in enumerate(batches):
            step = epoch * n_batches + bi
            n = batch.n_pairs
            m = batch.n_triplets if use_triplet else 0
            if use_triplet:
                if store.label_kind == LABEL_BINARY:
                    n_pos_total += int(np.sum(batch.pair_label == 1.0))
                else:
                    n_pos_total += n
                n_trip_total += batch.n_triplets

            if m > 0:
                Z_d = np.concatenate([
                    drug_matrix[batch.pair_drug],
                    drug_matrix[batch.trip_pos_drug],
                    drug_matrix[batch.trip_neg_drug],
                ])
                Z_t = np.concatenate([
                    prot_matrix[batch.pair_prot],
                    prot_matrix[batch.trip_anchor_prot],
                    prot_matrix[batch.trip_anchor_prot],
                ])
            else:
                Z_d = drug_matrix[batch.pair_drug]
                Z_t = prot_matrix[batch.pair_prot]

            bt = forward_pairs(params, Z_d, Z_t, film=config.film,
                               norm_eps=config.norm_eps)
            preds = bt.pred[:n]
            if config.mode == "regression":
                targets = (batch.pair_label - label_mean) / label_std
                task_losses, task_grads = huber_batch(preds, targets,
                                                      config.delta)
            else:
                task_losses, task_grads = bce_batch(preds, batch.pair_label)

            gp = np.zeros(bt.pred.shape[0])
            gd = np.zeros(bt.pred.shape[0])
            gp[:n] = task_grads / n
            if m > 0:
                d_ap = bt.dist[n : n + m]
                d_an = bt.dist[n + m :]
                trip_losses, g_ap, g_an = triplet_batch(d_ap, d_an,
                                                        config.alpha)
                w = loss_cfg.triplet_weight
                gd[n : n + m] = w * g_ap / m
                gd[n + m :] = w * g_an / m
            else:
                trip_losses = np.array([])

            loss = total_loss(task_losses, trip_losses, loss_cfg)
            if not math.isfinite(loss):
                raise NumericalAbort(
                    f"non-finite loss {loss} at step {step} "
                    f"(epoch {epoch}, batch {bi})",
                    step=step,
                    record_ids=_record_ids(store, batch),
                )
            lr = lr_at(optim.step, optim)
            lr_trace.append(lr)
            grads = backward_pairs(params, bt, gp, gd)
            params, optim = apply_update(params, grads, optim,
                                         frozen_extra=frozen_extra)

            sum_loss += loss
            sum_task += float(np.mean(task_losses))
            sum_trip += float(np.mean(trip_losses)) if trip_losses.size else 0.0

        mean_loss = sum_loss / len(batches)
        if not math.isfinite(mean_loss):
            raise NumericalAbort(
                f"non-finite epoch mean loss at epoch {epoch}",
                step=optim.step, record_ids=[],
            )
        val_report = None
        val_idx = store.split_record_indices(SPLIT_VAL)
        if np.any(~np.isnan(store.rec_label[val_idx])):
            val_report = _evaluate_params(
                params, store, SPLIT_VAL, config, label_mean, label_std
            )
        epoch_logs.append(EpochLog(
            epoch=epoch,
            mean_loss=mean_loss,
            mean_task=sum_task / len(batches),
            mean_triplet=sum_trip / len(batches),
            lr=lr,
            n_triplets=n_trip_total,
            skipped_triplets=n_pos_total - n_trip_total,
            val=val_report,
        ))
        logger.info(
            "epoch %d: loss=%.6f task=%.6f triplet=%.6f lr=%.3e",
            epoch, mean_loss, sum_task / len(batches),
            sum_trip / len(batches), lr,
        )

    checkpoint = Checkpoint(
        params=params, optim=optim, config=config,
        label_mean=label_mean, label_std=label_std, epoch=last_epoch,
    )
    report = TrainReport(
        epochs=epoch_logs,
        lr_trace=lr_trace,
        n_steps=optim.step,
        final_val=epoch_logs[-1].val if epoch_logs else None,
    )
    return checkpoint, report


def _pair_prediction(
    params: ModelParams, config: RunConfig, z_d: np.ndarray, z_t: np.ndarray
) -> float:
    """Shared scalar path for evaluate and predict: identical floats."""
    trace = forward(params, z_d, z_t, film=config.film,
                    norm_eps=config.norm_eps)
    return trace.prediction


def _sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def _labeled_indices(store: EmbeddingStore, split) -> np.ndarray:
    code = split_code(split)
    idx = store.split_record_indices(code)
    idx = idx[~np.isnan(store.rec_label[idx])]
    if idx.size == 0:
        raise UsageError(f"split {SPLIT_NAMES[code]!r} has no labeled records")
    return idx


def _raw_predictions(
    params: ModelParams, config: RunConfig, store: EmbeddingStore,
    idx: np.ndarray,
) -> np.ndarray:
    preds = np.empty(idx.size)
    for i, rec in enumerate(idx):
        z_d = store.drug_matrix[store.rec_drug[rec]].astype(np.float64)
        z_t = store.prot_matrix[store.rec_prot[rec]].astype(np.float64)
        preds[i] = _pair_prediction(params, config, z_d, z_t)
    return preds


def split_predictions(
    checkpoint: Checkpoint, store: EmbeddingStore, split
) -> tuple[np.ndarray, np.ndarray]:
    """(record indices, user-scale predictions) for a split's labeled
    records: de-normalized affinities or sigmoid probabilities. Each value
    equals ``predict`` on that record's pair, float for float."""
    idx = _labeled_indices(store, split)
    raw = _raw_predictions(checkpoint.params, checkpoint.config, store, idx)
    if checkpoint.config.mode == "classification":
        out = np.array([_sigmoid(float(x)) for x in raw])
    else:
        out = np.array([
            float(x) * checkpoint.label_std + checkpoint.label_mean
            for x in raw
        ])
    return idx, out


def _evaluate_params(
    params: ModelParams,
    store: EmbeddingStore,
    split,
    config: RunConfig,
    label_mean: float,
    label_std: float,
) -> EvalReport:
    code = split_code(split)
    idx = _labeled_indices(store, code)
    preds = _raw_predictions(params, config, store, idx)
    labels = store.rec_label[idx].astype(np.float64)

    report = EvalReport(n=int(idx.size))
    if config.mode == "regression":
        report.pcc = pcc(labels, np.array(
            [float(x) * label_std + label_mean for x in preds]))
    else:
        report.auroc = auroc(labels, preds)
        report.aupr = aupr(labels, preds)

    try:
        batches = make_batches(store, code, config.batch_size, config.seed,
                               epoch=0)
        report.triplet_satisfaction = triplet_satisfaction(
            params, store, batches, config.alpha, film=config.film
        )
    except (DataError, UsageError):
        report.triplet_satisfaction = None
    return report


def evaluate(checkpoint: Checkpoint, store: EmbeddingStore, split) -> EvalReport:
    """Metrics over a split using the checkpoint's model and label scaling."""
    if store.d_drug != checkpoint.params.d_drug or \
            store.d_prot != checkpoint.params.d_prot:
        raise DataError(
            f"store dims (d_drug={store.d_drug}, d_prot={store.d_prot}) do "
            f"not match checkpoint dims (d_drug={checkpoint.params.d_drug}, "
            f"d_prot={checkpoint.params.d_prot})"
        )
    return _evaluate_params(
        checkpoint.params, store, split, checkpoint.config,
        checkpoint.label_mean, checkpoint.label_std,
    )


def predict(
    checkpoint: Checkpoint,
    store: EmbeddingStore | None = None,
    drug_id: str | None = None,
    prot_id: str | None = None,
    z_d: np.ndarray | None = None,
    z_t: np.ndarray | None = None,
) -> float:
    """Affinity (regression, de-normalized) or probability (classification)
    for one pair, given ids into a store or raw embedding vectors."""
    if z_d is None:
        if store is None or drug_id is None:
            raise UsageError("predict needs either a store + ids or raw vectors")
        z_d = store.drug_matrix[_lookup(store, drug_id, "drug")] \
            .astype(np.float64)
    if z_t is None:
        if store is None or prot_id is None:
            raise UsageError("predict needs either a store + ids or raw vectors")
        z_t = store.prot_matrix[_lookup(store, prot_id, "prot")] \
            .astype(np.float64)
    raw = _pair_prediction(checkpoint.params, checkpoint.config,
                           np.asarray(z_d, dtype=np.float64),
                           np.asarray(z_t, dtype=np.float64))
    if checkpoint.config.mode == "classification":
        return _sigmoid(raw)
    return raw * checkpoint.label_std + checkpoint.label_mean


def _lookup(store: EmbeddingStore, ident: str, kind: str) -> int:
    import difflib

    ids = store.drug_ids if kind == "drug" else store.prot_ids
    lookup = store.drug_index if kind == "drug" else store.prot_index
    try:
        return lookup(ident)
    except LookupError_:
        near = difflib.get_close_matches(ident, ids, n=3)
        hint = f"; nearest: {', '.join(near)}" if near else ""
        raise LookupError_(f"unknown {kind} id {ident!r}{hint}") from None


# ---------------------------------------------------------------------------
# Checkpoint serialization
# ---------------------------------------------------------------------------


def _section(tag: bytes, payload: bytes) -> bytes:
    return tag + struct.pack("<Q", len(payload)) + payload


def save_checkpoint(checkpoint: Checkpoint, path: str) -> None:
    """Atomic write (temp file + rename) of the FDTC binary layout."""
    p = checkpoint.params
    vec = p.to_vector()
    prms = struct.pack("<IIII", p.d_drug, p.d_prot, p.d_shared, p.k)
    prms += vec.astype("<f8").tobytes()

    o = checkpoint.optim
    optm = struct.pack(
        "<QQQddddd", o.step, o.total_steps, o.warmup_steps,
        o.beta1, o.beta2, o.eps, o.weight_decay, o.peak_lr,
    )
    m_vec = o.m.to_vector().astype("<f8")
    v_vec = o.v.to_vector().astype("<f8")
    optm += struct.pack("<Q", m_vec.size) + m_vec.tobytes() + v_vec.tobytes()

    conf = config_to_text(checkpoint.config, extra={
        "label_mean": checkpoint.label_mean,
        "label_std": checkpoint.label_std,
        "epoch": checkpoint.epoch,
    }).encode("utf-8")

    rngs = struct.pack("<q", checkpoint.config.seed)

    blob = CKPT_MAGIC + struct.pack("<I", CKPT_VERSION)
    blob += _section(b"PRMS", prms)
    blob += _section(b"OPTM", optm)
    blob += _section(b"CONF", conf)
    blob += _section(b"RNGS", rngs)

    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_checkpoint(path: str) -> Checkpoint:
    try:
        with open(path, "rb") as fh:
            buf = fh.read()
    except OSError as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc}") from exc
    if len(buf) < 8 or buf[:4] != CKPT_MAGIC:
        raise CheckpointError(f"{path}: bad checkpoint magic")
    version = struct.unpack_from("<I", buf, 4)[0]
    if version != CKPT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")

    sections = {}
    pos = 8
    while pos < len(buf):
        if pos + 12 > len(buf):
            raise CheckpointError(f"{path}: truncated section header at byte {pos}")
        tag = buf[pos : pos + 4]
        length = struct.unpack_from("<Q", buf, pos + 4)[0]
        pos += 12
        if pos + length > len(buf):
            raise CheckpointError(
                f"{path}: truncated section {tag!r} at byte {pos}"
            )
        sections[tag] = buf[pos : pos + length]
        pos += length
    for required in (b"PRMS", b"OPTM", b"CONF", b"RNGS"):
        if required not in sections:
            raise CheckpointError(f"{path}: missing section {required!r}")

    prms = sections[b"PRMS"]
    d_drug, d_prot, d_shared, k = struct.unpack_from("<IIII", prms, 0)
    vec = np.frombuffer(prms, dtype="<f8", offset=16)
    template = init_params(d_drug=d_drug, d_prot=d_prot, d_shared=d_shared,
                           k=k)
    if vec.size != template.to_vector().size:
        raise CheckpointError(f"{path}: parameter vector length mismatch")
    params = ModelParams.from_vector(vec.copy(), template)

    optm = sections[b"OPTM"]
    step, total_steps, warmup = struct.unpack_from("<QQQ", optm, 0)
    beta1, beta2, eps, wd, peak_lr = struct.unpack_from("<ddddd", optm, 24)
    (veclen,) = struct.unpack_from("<Q", optm, 64)
    if veclen != vec.size:
        raise CheckpointError(f"{path}: moment vector length mismatch")
    floats = np.frombuffer(optm, dtype="<f8", offset=72)
    if floats.size != 2 * veclen:
        raise CheckpointError(f"{path}: optimizer section truncated")
    optim = OptimState(
        total_steps=int(total_steps), step=int(step),
        m=Gradients.from_vector(floats[:veclen].copy(), params),
        v=Gradients.from_vector(floats[veclen:].copy(), params),
        beta1=beta1, beta2=beta2, eps=eps, weight_decay=wd,
        peak_lr=peak_lr, warmup_steps=int(warmup),
    )

    mapping = parse_config_text(sections[b"CONF"].decode("utf-8"))
    label_mean = float(mapping.pop("label_mean"))
    label_std = float(mapping.pop("label_std"))
    epoch = int(mapping.pop("epoch"))
    config = config_from_mapping(mapping)

    return Checkpoint(params=params, optim=optim, config=config,
                      label_mean=label_mean, label_std=label_std, epoch=epoch)
