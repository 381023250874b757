"""Training loop: Adam with a step learning-rate schedule, 4-second random
crops, paired or random contrastive mini-batches, early stopping on the
development loss, and deterministic checkpoints.

All randomness is derived from the run seed; reruns are bit-identical.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio_io import read_wav
from .augment import AugmentOp, apply_augment, reseeded
from .contrastive import BatchComposition, CfConfig
from .errors import ConfigError, DataError
from .manifest import TrialManifest
from .metrics import EerResult, ScoreEntry, ScoreSet, compute_eer
from .model import (
    FRAME_HOP,
    FRAME_WIN,
    LossConfig,
    ModelParams,
    extract_base_features,
    forward_backward,
    forward_member,
    init_model,
)
from .util import derive_seed

PAPER_LR0 = 5e-6  # published recipe for a large pre-trained front end


@dataclass(frozen=True)
class TrainConfig:
    lr0: float = 1e-3  # desk-scale default; PAPER_LR0 is the documented override
    lr_decay: float = 0.1
    lr_decay_every: int = 10
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 8
    max_seconds: float = 4.0
    patience: int = 10
    max_epochs: int = 40
    loss_mode: str = "ce"  # "ce" or "ce+cf"
    pairing: str = "paired"  # spoof views paired with the batch's bona fide trial, or random
    k_views: int = 1  # augmented views per trial in contrastive batches
    augment: bool = True
    feature_dim: int = 32
    extractor_hidden: int = 64
    head_hidden: int = 64
    cf: CfConfig = field(default_factory=CfConfig)

    def __post_init__(self):
        if self.patience < 1 or self.max_epochs < 1:
            raise ConfigError("patience and max_epochs must be >= 1")
        if self.loss_mode not in ("ce", "ce+cf"):
            raise ConfigError(f"loss_mode must be 'ce' or 'ce+cf', got {self.loss_mode!r}")
        if self.pairing not in ("paired", "random"):
            raise ConfigError(f"pairing must be 'paired' or 'random', got {self.pairing!r}")
        if min(self.lr0, self.lr_decay, self.max_seconds, self.eps) <= 0:
            raise ConfigError("learning-rate, decay, eps and max_seconds must be positive")

    def max_frames(self, sample_rate: int = 16000) -> int:
        samples = int(self.max_seconds * sample_rate)
        return max(1, (samples - FRAME_WIN) // FRAME_HOP + 1)


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    m: dict
    v: dict
    step: int = 0


def adam_init(params: ModelParams) -> AdamState:
    zeros = lambda: {k: np.zeros_like(getattr(params, k)) for k in params.TRAINABLE}
    return AdamState(m=zeros(), v=zeros())


def adam_step(
    params: ModelParams,
    grads: dict,
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> tuple[ModelParams, AdamState]:
    """Bias-corrected Adam update, applied in place."""
    state.step += 1
    t = state.step
    for name in params.TRAINABLE:
        g = grads[name]
        state.m[name] = beta1 * state.m[name] + (1 - beta1) * g
        state.v[name] = beta2 * state.v[name] + (1 - beta2) * g * g
        m_hat = state.m[name] / (1 - beta1**t)
        v_hat = state.v[name] / (1 - beta2**t)
        getattr(params, name)[...] -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return params, state


# ---------------------------------------------------------------------------
# Data access
# ---------------------------------------------------------------------------

class DataBundle:
    """Base features for every trial plus lazily computed augmented views.

    Augmented views are fixed per (trial, view index): their seeds derive
    from the bundle's master seed, so every epoch sees the same view and
    reruns are deterministic.
    """

    def __init__(self, manifest: TrialManifest, augment_op: AugmentOp | None, master_seed: int):
        self.manifest = manifest
        self.augment_op = augment_op
        self.master_seed = master_seed
        self.trials: dict[str, dict] = {}
        self.pairing: dict[str, list[str]] = {}
        for rec in manifest:
            w = read_wav(manifest.resolve(rec))
            self.trials[rec.trial_id] = {
                "record": rec,
                "base": extract_base_features(w),
                "path": manifest.resolve(rec),
            }
            if rec.label == "bonafide":
                self.pairing.setdefault(rec.trial_id, [])
        for rec in manifest:
            if rec.label == "spoof" and rec.source_id in self.pairing:
                self.pairing[rec.source_id].append(rec.trial_id)
        self.pairing = {k: sorted(v) for k, v in self.pairing.items()}
        self._views: dict[tuple[str, int], np.ndarray] = {}

    def ids(self, subset: str | None = None, label: str | None = None) -> list[str]:
        out = []
        for tid, t in self.trials.items():
            rec = t["record"]
            if subset and rec.subset != subset:
                continue
            if label and rec.label != label:
                continue
            out.append(tid)
        return sorted(out)

    def label(self, trial_id: str) -> int:
        return 1 if self.trials[trial_id]["record"].label == "bonafide" else 0

    def base(self, trial_id: str) -> np.ndarray:
        return self.trials[trial_id]["base"]

    def view(self, trial_id: str, view_index: int) -> np.ndarray:
        """Augmented view's base features (view_index >= 1)."""
        if view_index == 0:
            return self.base(trial_id)
        if self.augment_op is None:
            raise ConfigError("augmented views requested but no augmentation is configured")
        key = (trial_id, view_index)
        if key not in self._views:
            op = reseeded(self.augment_op, derive_seed(self.master_seed, trial_id, view_index))
            w = read_wav(self.trials[trial_id]["path"])
            self._views[key] = extract_base_features(apply_augment(w, op))
        return self._views[key]


def compose_batch(
    bundle: DataBundle,
    bona_id: str,
    k_views: int,
    mode: str,
    rng: np.random.Generator,
    max_frames: int,
    spoof_pool: list[str] | None = None,
) -> BatchComposition:
    """Build one contrastive mini-batch around a bona fide trial.

    Paired mode takes the trial's own vocoded spoofs; random mode samples
    the same number of spoofs from the provided pool. The bona fide views
    are the original plus k_views augmented copies, and every spoof gets
    k_views augmented copies too. All members are cropped to a shared
    frame window (aligned in paired mode).
    """
    if bundle.label(bona_id) != 1:
        raise ConfigError(f"{bona_id} is not a bona fide trial")
    paired_ids = bundle.pairing.get(bona_id, [])
    if mode == "paired":
        spoof_ids = paired_ids
        if not spoof_ids:
            raise ConfigError(f"no paired spoofs for {bona_id}")
    elif mode == "random":
        pool = spoof_pool if spoof_pool is not None else []
        count = len(paired_ids) if paired_ids else min(4, len(pool))
        if count == 0 or len(pool) < count:
            raise ConfigError("random pairing needs a spoof pool at least as large as S")
        spoof_ids = [pool[i] for i in rng.choice(len(pool), size=count, replace=False)]
    else:
        raise ConfigError(f"unknown pairing mode {mode!r}")

    bona_views = [bundle.base(bona_id)] + [bundle.view(bona_id, k) for k in range(1, k_views + 1)]
    spoof_views = [bundle.base(s) for s in spoof_ids]
    for k in range(1, k_views + 1):
        spoof_views += [bundle.view(s, k) for s in spoof_ids]

    members = bona_views + spoof_views
    common = min(min(m.shape[0] for m in members), max_frames)
    if mode == "paired":
        start = int(rng.integers(0, min(m.shape[0] for m in members) - common + 1))
        members = [m[start : start + common] for m in members]
    else:
        members = [
            m[(s := int(rng.integers(0, m.shape[0] - common + 1))) : s + common] for m in members
        ]
    n_bona = len(bona_views)
    return BatchComposition(members[:n_bona], members[n_bona:], pairing=mode)


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EpochStats:
    epoch: int
    train_loss: float
    dev_loss: float
    dev_eer: float
    lr: float


def _crop(seq: np.ndarray, max_frames: int, rng: np.random.Generator) -> np.ndarray:
    if seq.shape[0] <= max_frames:
        return seq
    start = int(rng.integers(0, seq.shape[0] - max_frames + 1))
    return seq[start : start + max_frames]


def _dev_metrics(bundle: DataBundle, dev_ids: list[str], params: ModelParams) -> tuple[float, float]:
    losses = []
    entries = []
    for tid in dev_ids:
        cache = forward_member(bundle.base(tid), params)
        logits = cache["logits"]
        label = bundle.label(tid)
        m = logits.max()
        log_z = m + np.log(np.exp(logits - m).sum())
        losses.append(float(log_z - logits[label]))
        rec = bundle.trials[tid]["record"]
        entries.append(
            ScoreEntry(tid, float(logits[1] - logits[0]), rec.label, rec.attack_tag, "dev")
        )
    dev_loss = float(np.mean(losses))
    dev_eer = compute_eer(ScoreSet(entries, "dev")).eer
    return dev_loss, dev_eer


def fit_standardization(params: ModelParams, bundle: DataBundle, train_ids: list[str]) -> None:
    """Freeze per-dimension mean/scale of the front-end features into the model."""
    stacked = np.vstack([bundle.base(t) for t in train_ids])
    params.feat_mean[...] = stacked.mean(axis=0)
    params.feat_scale[...] = stacked.std(axis=0) + 1e-8


def train(
    bundle: DataBundle,
    cfg: TrainConfig,
    seed: int,
) -> tuple[ModelParams, list[EpochStats]]:
    """Train on the bundle's train subset with early stopping on dev loss.

    Returns the best-dev checkpoint and the per-epoch history. Improvement
    is strict; ties keep the earlier checkpoint.
    """
    train_ids = bundle.ids(subset="train")
    dev_ids = bundle.ids(subset="dev")
    if not train_ids or not dev_ids:
        raise ConfigError("need non-empty train and dev subsets")
    train_labels = {bundle.label(t) for t in train_ids}
    if len(train_labels) < 2:
        raise ConfigError("training set must contain both classes")

    params = init_model(
        derive_seed(seed, "init"), cfg.feature_dim, cfg.extractor_hidden, cfg.head_hidden
    )
    fit_standardization(params, bundle, train_ids)
    state = adam_init(params)
    rng = np.random.default_rng(derive_seed(seed, "train-loop"))
    max_frames = cfg.max_frames()
    loss_cfg = LossConfig(mode=cfg.loss_mode, cf=cfg.cf)

    bona_train = bundle.ids(subset="train", label="bonafide")
    spoof_train = bundle.ids(subset="train", label="spoof")
    history: list[EpochStats] = []
    best_loss = np.inf
    best_params = params.copy()
    epochs_since_best = 0

    for epoch in range(cfg.max_epochs):
        lr = cfg.lr0 * cfg.lr_decay ** (epoch // cfg.lr_decay_every)
        epoch_losses = []
        if cfg.loss_mode == "ce":
            items = [(t, 0) for t in train_ids]
            if cfg.augment and bundle.augment_op is not None:
                items += [(t, k) for t in train_ids for k in range(1, cfg.k_views + 1)]
            order = rng.permutation(len(items))
            for s in range(0, len(order), cfg.batch_size):
                chunk = [items[i] for i in order[s : s + cfg.batch_size]]
                members = [_crop(bundle.view(t, k), max_frames, rng) for t, k in chunk]
                labels = [bundle.label(t) for t, _ in chunk]
                loss, grads, _ = forward_backward(members, labels, params, loss_cfg, batch_id=f"ep{epoch}")
                epoch_losses.append(loss)
                adam_step(params, grads, state, lr, cfg.beta1, cfg.beta2, cfg.eps)
        else:
            for idx in rng.permutation(len(bona_train)):
                bona_id = bona_train[idx]
                batch = compose_batch(
                    bundle, bona_id, cfg.k_views, cfg.pairing, rng, max_frames, spoof_pool=spoof_train
                )
                loss, grads, _ = forward_backward(
                    batch.members, batch.labels, params, loss_cfg, batch_id=bona_id
                )
                epoch_losses.append(loss)
                adam_step(params, grads, state, lr, cfg.beta1, cfg.beta2, cfg.eps)

        dev_loss, dev_eer = _dev_metrics(bundle, dev_ids, params)
        history.append(EpochStats(epoch, float(np.mean(epoch_losses)), dev_loss, dev_eer, lr))
        if dev_loss < best_loss:
            best_loss = dev_loss
            best_params = params.copy()
            epochs_since_best = 0
        else:
            epochs_since_best += 1
            if epochs_since_best >= cfg.patience:
                break
    return best_params, history


def score_manifest(
    manifest: TrialManifest, params: ModelParams, set_name: str = "", transform=None
) -> tuple[ScoreSet, list[str]]:
    """Score every trial at full length (no crop); unreadable trials are
    reported back as missing rather than failing the whole set.

    ``transform`` optionally maps each waveform before scoring (for
    example non-speech trimming)."""
    entries = []
    missing = []
    for rec in manifest:
        try:
            w = read_wav(manifest.resolve(rec))
            if transform is not None:
                w = transform(w)
            cache = forward_member(extract_base_features(w), params)
        except DataError:
            missing.append(rec.trial_id)
            continue
        logits = cache["logits"]
        entries.append(
            ScoreEntry(rec.trial_id, float(logits[1] - logits[0]), rec.label, rec.attack_tag, set_name)
        )
    return ScoreSet(entries, name=set_name), missing


# ---------------------------------------------------------------------------
# Checkpoints and history files (deterministic bytes)
# ---------------------------------------------------------------------------

_CKPT_MAGIC = "spoofcm-checkpoint"
_CKPT_FIELDS = ModelParams.TRAINABLE + ("feat_mean", "feat_scale")


def save_checkpoint(path: str | Path, params: ModelParams, config_hash: str = "") -> None:
    header = {
        "format": _CKPT_MAGIC,
        "version": 1,
        "config_hash": config_hash,
        "tensors": [
            {"name": n, "shape": list(getattr(params, n).shape)} for n in _CKPT_FIELDS
        ],
    }
    blob = b"".join(np.ascontiguousarray(getattr(params, n), dtype="<f8").tobytes() for n in _CKPT_FIELDS)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        f.write(blob)


def load_checkpoint(path: str | Path) -> tuple[ModelParams, str]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"checkpoint not found: {path}")
    with open(path, "rb") as f:
        header = json.loads(f.readline().decode("utf-8"))
        blob = f.read()
    if header.get("format") != _CKPT_MAGIC:
        raise DataError(f"{path}: not a model checkpoint")
    kwargs = {}
    pos = 0
    for spec in header["tensors"]:
        size = int(np.prod(spec["shape"])) if spec["shape"] else 1
        arr = np.frombuffer(blob, dtype="<f8", count=size, offset=pos).reshape(spec["shape"])
        kwargs[spec["name"]] = arr.copy()
        pos += size * 8
    return ModelParams(**kwargs), header.get("config_hash", "")


def history_csv(history: list[EpochStats]) -> str:
    lines = ["epoch,train_loss,dev_loss,dev_eer,lr"]
    for h in history:
        lines.append(f"{h.epoch},{h.train_loss!r},{h.dev_loss!r},{h.dev_eer!r},{h.lr!r}")
    return "\n".join(lines) + "\n"
