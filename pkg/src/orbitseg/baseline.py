"""Per-pixel linear softmax baseline.

Handcrafted pixel features (normalized RGB, image-plane coordinates, local
mean color) feed a K-way linear classifier trained by mini-batch gradient
descent on any of the segmentation losses. This is deliberately the
smallest model that closes the loop from generated frames to Dice-scored
predictions; it is not a contender, it is a harness.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import uniform_filter

from .dataset import LabeledFrame
from .losses import LossParams, LossResult, cce_loss, dice_focal_loss, dice_loss
from .mask_codec import CategoricalMask
from .metrics import ConfusionTally, DiceReport, dice_scores, tally
from .taxonomy import ClassTaxonomy

TRAIN_LOSSES = {
    "cce": cce_loss,
    "dice": dice_loss,
    "dice_focal": dice_focal_loss,
}

_CKPT_MAGIC = b"OSEG"
_CKPT_VERSION = 1


class BaselineError(RuntimeError):
    pass


@dataclass(frozen=True)
class PixelFeaturizer:
    """Feature layout (in order): RGB (3, when use_rgb), row/col in [0,1]
    (2, when use_coords), window-mean RGB (3, when use_rgb).

    RGB channels are scaled to [0,1] then standardized by mean/std; the
    window mean runs over the standardized channels with edge replication,
    so a constant image has window-mean equal to its RGB features.
    """

    use_rgb: bool = True
    use_coords: bool = True
    window: int = 3
    mean: np.ndarray = field(default_factory=lambda: np.zeros(3))
    std: np.ndarray = field(default_factory=lambda: np.ones(3))

    def __post_init__(self):
        if self.window < 1 or self.window % 2 == 0:
            raise ValueError("window must be an odd integer >= 1")
        if not (self.use_rgb or self.use_coords):
            raise ValueError("featurizer with no features")
        mean = np.asarray(self.mean, dtype=np.float64).reshape(3)
        std = np.asarray(self.std, dtype=np.float64).reshape(3)
        if not (np.isfinite(mean).all() and np.isfinite(std).all() and (std > 0).all()):
            raise ValueError("normalization mean/std must be finite with std > 0")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)

    @property
    def num_features(self) -> int:
        return (6 if self.use_rgb else 0) + (2 if self.use_coords else 0)

    def config_hash(self) -> str:
        h = hashlib.sha256()
        h.update(struct.pack("<??H", self.use_rgb, self.use_coords, self.window))
        h.update(self.mean.tobytes())
        h.update(self.std.tobytes())
        return h.hexdigest()


def fit_normalization(frames: list[LabeledFrame]) -> tuple[np.ndarray, np.ndarray]:
    """Per-channel mean/std of [0,1]-scaled RGB over all frame pixels."""
    if not frames:
        raise ValueError("need at least one frame")
    total = np.zeros(3)
    total_sq = np.zeros(3)
    n = 0
    for f in frames:
        x = f.rgb.reshape(-1, 3).astype(np.float64) / 255.0
        total += x.sum(axis=0)
        total_sq += (x * x).sum(axis=0)
        n += x.shape[0]
    mean = total / n
    var = np.maximum(total_sq / n - mean * mean, 0.0)
    std = np.maximum(np.sqrt(var), 1e-6)
    return mean, std


def featurize(rgb: np.ndarray, featurizer: PixelFeaturizer) -> np.ndarray:
    """Per-pixel feature field, (H, W, F) float64. Deterministic."""
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[2] != 3 or rgb.size == 0:
        raise ValueError("rgb must be a nonempty (H, W, 3) image")
    h, w = rgb.shape[:2]
    cols = []
    if featurizer.use_rgb:
        x = rgb.astype(np.float64) / 255.0
        x = (x - featurizer.mean) / featurizer.std
        cols.append(x)
    if featurizer.use_coords:
        rr = np.arange(h, dtype=np.float64) / max(h - 1, 1)
        cc = np.arange(w, dtype=np.float64) / max(w - 1, 1)
        grid = np.empty((h, w, 2))
        grid[..., 0] = rr[:, None]
        grid[..., 1] = cc[None, :]
        cols.append(grid)
    if featurizer.use_rgb:
        win = np.empty_like(cols[0])
        for c in range(3):
            uniform_filter(cols[0][..., c], size=featurizer.window,
                           output=win[..., c], mode="nearest")
        cols.append(win)
    return np.concatenate(cols, axis=2)


@dataclass
class LinearSegmenter:
    weights: np.ndarray            # (K, F)
    bias: np.ndarray               # (K,)
    featurizer: PixelFeaturizer

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise ValueError("weights must be (K, F) with bias (K,)")
        if self.weights.shape[1] != self.featurizer.num_features:
            raise ValueError("weight columns do not match featurizer output size")
        if not (np.isfinite(self.weights).all() and np.isfinite(self.bias).all()):
            raise ValueError("model parameters must be finite")

    @property
    def num_classes(self) -> int:
        return self.weights.shape[0]

    @property
    def featurizer_hash(self) -> str:
        return self.featurizer.config_hash()


def new_model(num_classes: int, featurizer: PixelFeaturizer) -> LinearSegmenter:
    f = featurizer.num_features
    return LinearSegmenter(weights=np.zeros((num_classes, f)),
                           bias=np.zeros(num_classes), featurizer=featurizer)


def predict(model: LinearSegmenter, features: np.ndarray) -> np.ndarray:
    """Per-pixel class probabilities, (H, W, K); softmax(Wx + b)."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 3 or features.shape[2] != model.weights.shape[1]:
        raise ValueError(f"features must be (H, W, {model.weights.shape[1]})")
    logits = features @ model.weights.T + model.bias
    logits -= logits.max(axis=2, keepdims=True)  # shift-invariant, avoids overflow
    e = np.exp(logits)
    return e / e.sum(axis=2, keepdims=True)


def segment(model: LinearSegmenter, rgb: np.ndarray) -> CategoricalMask:
    probs = predict(model, featurize(rgb, model.featurizer))
    return CategoricalMask(np.argmax(probs, axis=2).astype(np.uint8))


@dataclass(frozen=True)
class TrainConfig:
    loss: str = "cce"              # cce | dice | dice_focal
    learning_rate: float = 0.5
    epochs: int = 10
    batch_size: int = 8            # frames per gradient step
    seed: int = 0
    loss_params: LossParams = LossParams()
    patience: int | None = None    # early stop on stagnant validation Dice

    def __post_init__(self):
        if self.loss not in TRAIN_LOSSES:
            raise ValueError(f"loss must be one of {sorted(TRAIN_LOSSES)}")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.patience is not None and self.patience < 1:
            raise ValueError("patience must be >= 1 when set")


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    train_loss: float
    val_macro_dice: float  # NaN when no validation frames were given


def loss_and_grad(model: LinearSegmenter, features: np.ndarray, target: np.ndarray,
                  loss_name: str, params: LossParams):
    """Frame loss plus gradients w.r.t. weights and bias.

    Chains the loss's probability gradient through the softmax Jacobian:
    g_logit = p * (g_p - <g_p, p>).
    """
    probs = predict(model, features)
    res: LossResult = TRAIN_LOSSES[loss_name](probs, target, params)
    inner = (res.grad * probs).sum(axis=2, keepdims=True)
    g_logit = probs * (res.grad - inner)
    d_w = np.einsum("hwk,hwf->kf", g_logit, features)
    d_b = g_logit.sum(axis=(0, 1))
    return res.value, d_w, d_b


def train(frames: list[LabeledFrame], config: TrainConfig, taxonomy: ClassTaxonomy,
          val_frames: list[LabeledFrame] | None = None,
          featurizer: PixelFeaturizer | None = None,
          ) -> tuple[LinearSegmenter, list[EpochStats]]:
    """Mini-batch gradient descent from zero weights.

    The featurizer defaults to all features with normalization fitted on
    the training frames; pass one explicitly to use fixed constants.
    Deterministic in config.seed: seeded shuffle, fixed accumulation order.
    """
    if not frames:
        raise ValueError("need at least one training frame")
    k = taxonomy.num_classes
    for f in frames:
        if int(f.mask.data.max()) >= k:
            raise ValueError("training mask has indices outside the taxonomy")
    if featurizer is None:
        mean, std = fit_normalization(frames)
        featurizer = PixelFeaturizer(mean=mean, std=std)
    model = new_model(k, featurizer)

    feats = [featurize(f.rgb, featurizer) for f in frames]
    targets = [f.mask.data.astype(np.int64) for f in frames]
    rng = np.random.default_rng(config.seed)
    history: list[EpochStats] = []
    best_dice = -np.inf
    stale = 0
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(frames))
        epoch_loss = 0.0
        for start in range(0, len(order), config.batch_size):
            batch = order[start:start + config.batch_size]
            acc_w = np.zeros_like(model.weights)
            acc_b = np.zeros_like(model.bias)
            batch_loss = 0.0
            for fi in batch:  # fixed order: deterministic accumulation
                value, d_w, d_b = loss_and_grad(model, feats[fi], targets[fi],
                                                config.loss, config.loss_params)
                if not np.isfinite(value):
                    raise BaselineError(
                        f"non-finite {config.loss} loss at epoch {epoch}, frame {fi}")
                acc_w += d_w
                acc_b += d_b
                batch_loss += value
            scale = config.learning_rate / len(batch)
            model.weights -= scale * acc_w
            model.bias -= scale * acc_b
            if not np.isfinite(model.weights).all():
                raise BaselineError(f"weights diverged at epoch {epoch}")
            epoch_loss += batch_loss
        epoch_loss /= len(frames)
        val_dice = float("nan")
        if val_frames:
            val_dice = evaluate(model, val_frames, taxonomy).macro_average
        history.append(EpochStats(epoch=epoch, train_loss=epoch_loss,
                                  val_macro_dice=val_dice))
        if config.patience is not None and val_frames:
            if val_dice > best_dice:
                best_dice = val_dice
                stale = 0
            else:
                stale += 1
                if stale >= config.patience:
                    break
    return model, history


def evaluate(model: LinearSegmenter, frames: list[LabeledFrame],
             taxonomy: ClassTaxonomy, absent_policy: str = "exclude") -> DiceReport:
    """Micro-aggregated Dice: tallies summed over frames, then scored."""
    if not frames:
        raise ValueError("need at least one frame to evaluate")
    total = ConfusionTally.zero(taxonomy.num_classes)
    for f in frames:
        pred = segment(model, f.rgb)
        total = total + tally(pred, f.mask, taxonomy.num_classes)
    return dice_scores(total, absent_policy)


def history_csv(history: list[EpochStats]) -> str:
    lines = ["epoch,train_loss,val_macro_dice"]
    for h in history:
        lines.append(f"{h.epoch},{h.train_loss:.10g},{h.val_macro_dice:.10g}")
    return "\n".join(lines) + "\n"


def save_model(model: LinearSegmenter, path: str | Path) -> None:
    """Binary checkpoint: magic, version, dims, featurizer config, raw f64 data."""
    f = model.featurizer
    k, nf = model.weights.shape
    blob = bytearray()
    blob += _CKPT_MAGIC
    blob += struct.pack("<HII??H", _CKPT_VERSION, k, nf, f.use_rgb, f.use_coords, f.window)
    blob += f.mean.astype("<f8").tobytes()
    blob += f.std.astype("<f8").tobytes()
    blob += model.weights.astype("<f8").tobytes()
    blob += model.bias.astype("<f8").tobytes()
    blob += hashlib.sha256(bytes(blob)).digest()
    Path(path).write_bytes(bytes(blob))


def load_model(path: str | Path) -> LinearSegmenter:
    raw = Path(path).read_bytes()
    if len(raw) < 4 + 14 + 32 or raw[:4] != _CKPT_MAGIC:
        raise BaselineError(f"{path}: not a model checkpoint")
    body, digest = raw[:-32], raw[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise BaselineError(f"{path}: checkpoint checksum mismatch")
    version, k, nf, use_rgb, use_coords, window = struct.unpack_from("<HII??H", raw, 4)
    if version != _CKPT_VERSION:
        raise BaselineError(f"{path}: unsupported checkpoint version {version}")
    off = 4 + struct.calcsize("<HII??H")
    mean = np.frombuffer(raw, dtype="<f8", count=3, offset=off).copy()
    off += 24
    std = np.frombuffer(raw, dtype="<f8", count=3, offset=off).copy()
    off += 24
    weights = np.frombuffer(raw, dtype="<f8", count=k * nf, offset=off).reshape(k, nf).copy()
    off += 8 * k * nf
    bias = np.frombuffer(raw, dtype="<f8", count=k, offset=off).copy()
    featurizer = PixelFeaturizer(use_rgb=use_rgb, use_coords=use_coords,
                                 window=window, mean=mean, std=std)
    return LinearSegmenter(weights=weights, bias=bias, featurizer=featurizer)
