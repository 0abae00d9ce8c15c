"""Reduced basis neural operator: an MLP ``p -> s_r(p)`` trained on the reduced
residual loss.

The per-sample training objective is the reduced fiber loss
``s^T W_r s + 2 s^T alpha_r + beta``; its output gradient ``2 (W_r s + alpha_r)``
is backpropagated by hand through LeakyReLU layers.  Training uses Adam with
decoupled weight decay, a step-decay schedule and early stopping on a
validation split.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .fields import rng
from .linalg import read_matrix, write_matrix
from .rom import ReducedBatch

SLOPE = 0.01
FEATURE_DIM = 64

# per-stage seed offsets from the master seed
SEED_INIT = 1_000_003
SEED_SHUFFLE = 2_000_003


class TrainingDiverged(RuntimeError):
    pass


# -- input features ------------------------------------------------------------


@dataclass(eq=False)
class FeatureCodec:
    """Maps parameter samples to network inputs.

    ``identity`` passes mini-square exponents through; ``pca`` projects nodal
    fields onto the leading principal directions of the training fields.
    """

    kind: str
    mean: np.ndarray | None = None
    components: np.ndarray | None = None  # (d_in, n_nodes), orthonormal rows
    explained: float = 1.0

    @property
    def d_in(self) -> int:
        return 16 if self.kind == "identity" else self.components.shape[0]

    @classmethod
    def fit(cls, samples, d_in=FEATURE_DIM) -> "FeatureCodec":
        samples = list(samples)
        kinds = {s.kind for s in samples}
        if len(kinds) != 1:
            raise ValueError(f"samples mix parameter kinds {sorted(kinds)}")
        kind = kinds.pop()
        if kind == "minisquare":
            return cls("identity")
        if kind == "constant":
            raise ValueError("constant-parameter problems have no input features")
        V = np.stack([s.features for s in samples])
        if d_in > len(samples):
            raise ValueError(f"d_in = {d_in} exceeds the {len(samples)} training fields")
        mean = V.mean(axis=0)
        _, sv, Vt = np.linalg.svd(V - mean, full_matrices=False)
        energy = sv ** 2
        explained = float(energy[:d_in].sum() / energy.sum()) if energy.sum() > 0 else 1.0
        return cls("pca", mean, Vt[:d_in].copy(), explained)

    def transform(self, samples) -> np.ndarray:
        V = np.stack([s.features for s in samples])
        if self.kind == "identity":
            if V.shape[1] != 16:
                raise ValueError("identity codec expects 16 mini-square exponents")
            return V.copy()
        return (V - self.mean) @ self.components.T

    def save(self, prefix) -> dict:
        meta = {"kind": self.kind, "explained": self.explained}
        if self.kind == "pca":
            write_matrix(f"{prefix}.codec_mean.rbno", self.mean)
            write_matrix(f"{prefix}.codec_components.rbno", self.components)
        return meta

    @classmethod
    def load(cls, prefix, meta) -> "FeatureCodec":
        if meta["kind"] == "identity":
            return cls("identity")
        return cls("pca", read_matrix(f"{prefix}.codec_mean.rbno").ravel(),
                   read_matrix(f"{prefix}.codec_components.rbno"), meta["explained"])


def input_features(samples, codec: FeatureCodec | None = None, d_in=FEATURE_DIM):
    """Feature matrix (N x d_in) and the codec (fitted on ``samples`` if not given)."""
    samples = list(samples)
    codec = FeatureCodec.fit(samples, d_in) if codec is None else codec
    return codec.transform(samples), codec


# -- network -------------------------------------------------------------------


def leaky_relu(x):
    return np.where(x > 0, x, SLOPE * x)


@dataclass(eq=False)
class Mlp:
    """Fully connected network; weights are (out, in), the last layer is affine."""

    weights: list
    biases: list
    clip: float | None = None

    @classmethod
    def init(cls, widths, seed, clip=None) -> "Mlp":
        g = rng(seed)
        Ws, bs = [], []
        for a, b in zip(widths[:-1], widths[1:]):
            lim = np.sqrt(6.0 / (a + b))
            Ws.append(g.uniform(-lim, lim, size=(b, a)))
            bs.append(np.zeros(b))
        return cls(Ws, bs, clip)

    @property
    def widths(self) -> list:
        return [self.weights[0].shape[1]] + [W.shape[0] for W in self.weights]

    @property
    def params(self) -> list:
        return [p for pair in zip(self.weights, self.biases) for p in pair]

    def copy(self) -> "Mlp":
        return Mlp([W.copy() for W in self.weights], [b.copy() for b in self.biases], self.clip)

    def _forward(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.widths[0]:
            raise ValueError(f"inputs of shape {X.shape} do not match input width {self.widths[0]}")
        acts, pre = [X], []
        h = X
        last = len(self.weights) - 1
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ W.T + b
            pre.append(z)
            h = z if i == last else leaky_relu(z)
            acts.append(h)
        y = h
        scale = None
        if self.clip is not None:
            norm = np.linalg.norm(y, axis=1, keepdims=True)
            scale = np.minimum(1.0, self.clip / np.maximum(norm, 1e-300))
            y = y * scale
        return y, (acts, pre, scale)

    def forward(self, X) -> np.ndarray:
        return self._forward(X)[0]

    __call__ = forward

    def backward(self, cache, dy) -> list:
        """Parameter gradients (ordered as :attr:`params`) for output cotangent ``dy``."""
        acts, pre, scale = cache
        if scale is not None:
            y = acts[-1]
            clipped = scale[:, 0] < 1.0
            g = dy * scale
            if np.any(clipped):
                yc, s = y[clipped], scale[clipped]
                n2 = np.sum(yc * yc, axis=1, keepdims=True)
                g[clipped] = s * (dy[clipped] - yc * np.sum(yc * dy[clipped], axis=1, keepdims=True) / n2)
            dy = g
        grads = []
        delta = dy
        for i in range(len(self.weights) - 1, -1, -1):
            if i < len(self.weights) - 1:
                delta = delta * np.where(pre[i] > 0, 1.0, SLOPE)
            grads.append(delta.T @ acts[i])
            grads.append(delta.sum(axis=0))
            delta = delta @ self.weights[i]
        out = []
        for k in range(len(self.weights)):
            out += [grads[2 * (len(self.weights) - 1 - k)], grads[2 * (len(self.weights) - 1 - k) + 1]]
        return out

    def save(self, directory, extra=None) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            write_matrix(d / f"layer{i}.W.rbno", W)
            write_matrix(d / f"layer{i}.b.rbno", b)
        manifest = {"widths": self.widths, "activation": "leaky_relu", "slope": SLOPE, "clip": self.clip}
        manifest.update(extra or {})
        (d / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, directory) -> tuple:
        d = Path(directory)
        manifest = json.loads((d / "manifest.json").read_text())
        n = len(manifest["widths"]) - 1
        Ws = [read_matrix(d / f"layer{i}.W.rbno") for i in range(n)]
        bs = [read_matrix(d / f"layer{i}.b.rbno").ravel() for i in range(n)]
        return cls(Ws, bs, manifest.get("clip")), manifest


def forward(model: Mlp, features) -> np.ndarray:
    return model.forward(features)


# -- losses --------------------------------------------------------------------


LOSS_MODES = ("residual", "coef_mse", "both")


def loss_and_grad(model: Mlp, features, batch: ReducedBatch, mode="residual", labels=None, w_mse=1.0):
    """Mean batch loss and its parameter gradients.

    ``residual``: reduced fiber loss; ``coef_mse``: ``||s - s_r||^2`` against
    ``labels``; ``both``: residual plus ``w_mse`` times the coefficient error.
    """
    if mode not in LOSS_MODES:
        raise ValueError(f"unknown loss mode {mode!r}")
    if mode != "residual" and labels is None:
        raise ValueError(f"loss mode {mode!r} needs RB coefficient labels")
    y, cache = model._forward(features)
    n = len(y)
    loss, dy = 0.0, np.zeros_like(y)
    if mode in ("residual", "both"):
        loss += float(np.mean(batch.losses(y)))
        dy += batch.gradients(y) / n
    if mode in ("coef_mse", "both"):
        w = 1.0 if mode == "coef_mse" else w_mse
        diff = y - labels
        loss += w * float(np.mean(np.sum(diff * diff, axis=1)))
        dy += w * 2.0 * diff / n
    return loss, model.backward(cache, dy)


def model_loss(model, features, batch, mode="residual", labels=None, w_mse=1.0) -> float:
    y = model.forward(features)
    loss = 0.0
    if mode in ("residual", "both"):
        loss += float(np.mean(batch.losses(y)))
    if mode in ("coef_mse", "both"):
        w = 1.0 if mode == "coef_mse" else w_mse
        loss += w * float(np.mean(np.sum((y - labels) ** 2, axis=1)))
    return loss


# -- training ------------------------------------------------------------------


@dataclass
class TrainConfig:
    loss_mode: str = "residual"
    w_mse: float = 1.0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1e-2
    gamma: float = 0.9
    step_size: int = 50
    batch_size: int = 4096
    max_iter: int = 2000
    patience: int | None = None
    hidden: tuple = (256, 256)
    clip: bool = False
    bias_init: bool = True
    seed: int = 0

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if self.loss_mode not in LOSS_MODES:
            raise ValueError(f"unknown loss mode {self.loss_mode!r}")
        if self.loss_mode == "both" and not self.w_mse > 0:
            raise ValueError("loss mode 'both' requires w_mse > 0")
        for name in ("lr", "gamma", "step_size", "batch_size", "max_iter"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be nonnegative")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d


@dataclass(eq=False)
class Dataset:
    features: np.ndarray
    batch: ReducedBatch
    labels: np.ndarray | None = None  # RB-optimal coefficients

    def __len__(self):
        return len(self.features)

    def subset(self, idx) -> "Dataset":
        return Dataset(self.features[idx], self.batch.subset(idx),
                       None if self.labels is None else self.labels[idx])


@dataclass(eq=False)
class TrainedModel:
    model: Mlp
    train_history: list = field(default_factory=list)
    val_history: list = field(default_factory=list)
    best_iteration: int = 0

    @property
    def best_val(self) -> float:
        return self.val_history[self.best_iteration]


class AdamW:
    def __init__(self, params, cfg: TrainConfig):
        self.cfg = cfg
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def lr(self) -> float:
        return self.cfg.lr * self.cfg.gamma ** (self.t // self.cfg.step_size)

    def step(self, params, grads):
        c = self.cfg
        lr = self.lr()
        self.t += 1
        b1t, b2t = 1.0 - c.beta1 ** self.t, 1.0 - c.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= c.beta1
            m += (1.0 - c.beta1) * g
            v *= c.beta2
            v += (1.0 - c.beta2) * g * g
            p *= 1.0 - lr * c.weight_decay
            p -= lr * (m / b1t) / (np.sqrt(v / b2t) + c.eps)


def constant_predictor(data: Dataset, cfg: TrainConfig) -> np.ndarray:
    """Minimiser of the mean training loss over constant outputs."""
    b = data.batch
    if cfg.loss_mode == "coef_mse":
        return data.labels.mean(axis=0)
    W, a = b.W.mean(axis=0), b.alpha.mean(axis=0)
    if cfg.loss_mode == "both":
        eye = np.eye(b.r) * cfg.w_mse
        return np.linalg.solve(W + eye, -(a - cfg.w_mse * data.labels.mean(axis=0)))
    return np.linalg.solve(W, -a)


def train(train_set: Dataset, val_set: Dataset | None, cfg: TrainConfig) -> TrainedModel:
    """Train from a seeded Xavier init; keep the best-validation snapshot.

    With no validation set the training loss drives early stopping.
    """
    r = train_set.batch.r
    clip = None
    if cfg.clip:
        opt = train_set.labels if train_set.labels is not None else train_set.batch.optimal()
        clip = 2.0 * float(np.max(np.linalg.norm(opt, axis=1)))
    model = Mlp.init([train_set.features.shape[1], *cfg.hidden, r], cfg.seed + SEED_INIT, clip)
    if cfg.bias_init:
        model.biases[-1][:] = constant_predictor(train_set, cfg)
    opt = AdamW(model.params, cfg)
    shuffle = rng(cfg.seed + SEED_SHUFFLE)
    n = len(train_set)
    args = dict(mode=cfg.loss_mode, w_mse=cfg.w_mse)
    monitor = val_set if val_set is not None and len(val_set) else train_set

    def val_loss(mdl):
        return model_loss(mdl, monitor.features, monitor.batch, labels=monitor.labels, **args)

    out = TrainedModel(model.copy())
    out.val_history.append(val_loss(model))
    out.train_history.append(model_loss(model, train_set.features, train_set.batch, labels=train_set.labels, **args))
    initial = max(out.train_history[0], 1e-300)
    best, since = out.val_history[0], 0
    for it in range(1, cfg.max_iter + 1):
        if n <= cfg.batch_size:
            chunks = [np.arange(n)]
        else:
            perm = shuffle.permutation(n)
            chunks = [perm[i:i + cfg.batch_size] for i in range(0, n, cfg.batch_size)]
        for idx in chunks:
            part = train_set if len(chunks) == 1 else train_set.subset(idx)
            loss, grads = loss_and_grad(model, part.features, part.batch, labels=part.labels, **args)
            if not np.isfinite(loss) or loss > 1e6 * initial:
                raise TrainingDiverged(f"training loss {loss:.3e} at iteration {it} exceeds 1e6 x initial {initial:.3e}")
            opt.step(model.params, grads)
        out.train_history.append(model_loss(model, train_set.features, train_set.batch, labels=train_set.labels, **args))
        v = val_loss(model)
        out.val_history.append(v)
        if v < best:
            best, since = v, 0
            out.model = model.copy()
            out.best_iteration = it
        else:
            since += 1
            if cfg.patience is not None and since >= cfg.patience:
                break
    return out


# -- evaluation ----------------------------------------------------------------


RATIO_BINS = np.logspace(-1, 1, 21)


@dataclass(eq=False)
class Metrics:
    """Per-sample metrics; ``summary`` gives means and standard deviations."""

    sample_ids: np.ndarray
    loss: np.ndarray
    rb_loss: np.ndarray
    err_rb: np.ndarray
    err_ref: np.ndarray | None = None
    rel_h: np.ndarray | None = None
    rel_l: np.ndarray | None = None

    @property
    def ratio(self) -> np.ndarray | None:
        if self.err_ref is None:
            return None
        with np.errstate(divide="ignore"):
            return np.where(self.loss > 0, self.err_ref / np.sqrt(np.maximum(self.loss, 0.0)), np.inf)

    def histogram(self, bins=RATIO_BINS):
        counts, edges = np.histogram(self.ratio, bins=bins)
        return counts, edges

    def summary(self) -> dict:
        out = {}
        for name in ("loss", "rb_loss", "err_rb", "err_ref", "rel_h", "rel_l"):
            v = getattr(self, name)
            if v is not None:
                out[name + "_mean"] = float(np.mean(v))
                out[name + "_std"] = float(np.std(v))
        return out


def evaluate(model, features, batch: ReducedBatch, basis, X, references=None, to_reference=None,
             X_ref=None, L_ref=None) -> Metrics:
    """Residual loss, X-error against the RB optimum and (optionally) errors
    against reference solutions.

    ``references`` holds reference coefficient vectors as columns;
    ``to_reference`` maps a full coarse vector into the reference space
    (identity by default), and ``X_ref``/``L_ref`` are the reference H- and
    L-block Gram matrices.
    """
    pred = model.forward(features) if hasattr(model, "forward") else np.asarray(model)
    opt = batch.optimal()
    d = pred - opt
    # X-orthonormal basis: reduced Euclidean distance is the X-distance
    err_rb = np.sqrt(np.sum(d * d, axis=1))
    m = Metrics(batch.ids.copy(), batch.losses(pred), batch.losses(opt), err_rb)
    if references is not None:
        X_ref = X if X_ref is None else X_ref
        full = basis.Pi @ pred.T
        errs, rh, rl = [], [], []
        for i in range(full.shape[1]):
            s = full[:, i] if to_reference is None else to_reference(full[:, i])
            ref = references[:, i]
            e = s - ref
            errs.append(np.sqrt(max(e @ (X_ref @ e), 0.0)))
            rh.append(errs[-1] / np.sqrt(ref @ (X_ref @ ref)))
            if L_ref is not None:
                rl.append(np.sqrt(max(e @ (L_ref @ e), 0.0) / (ref @ (L_ref @ ref))))
        m.err_ref, m.rel_h = np.array(errs), np.array(rh)
        m.rel_l = np.array(rl) if L_ref is not None else None
    return m
