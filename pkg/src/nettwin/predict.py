"""One-hour-ahead latency distribution prediction.

Examples pair 5-minute window aggregates with the (mean, std) of the same
cell's latency one hour later.  Three predictors share identical example
sets and one chronological 80/20 split: a naive persistence baseline, a
single pooled model, and per-cell local models with naive fallback where
data is scarce.

The regressor is a small fully connected network written directly on
numpy: rectifier hiddens, inverted dropout, mini-batch Adam, mean squared
error over the two normalized targets.  Backprop is hand-derived and
checked against central finite differences in the test suite.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd

from .rng import TRAINING, substream

FEATURE_NAMES = (
    "cell_load_mean",
    "speed_mean",
    "tx_pkts_mean",
    "rx_pkts_mean",
    "per_mean",
    "avg_pkt_bytes_mean",
    "latency_mean_ms",
    "latency_std_ms",
    "jitter_mean_ms",
    "throughput_mean_bps",
    "sinr_mean_db",
    "rsrp_mean_dbm",
    "los_fraction",
    "hour_sin",
    "hour_cos",
)
LATENCY_MEAN_IDX = FEATURE_NAMES.index("latency_mean_ms")
LATENCY_STD_IDX = FEATURE_NAMES.index("latency_std_ms")


@dataclass(frozen=True)
class HourlyExample:
    cell_id: int
    time_s: float
    features: np.ndarray
    target: np.ndarray  # (mean_ms, std_ms) one hour ahead


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 32
    epochs: int = 50
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    dropout: float = 0.2
    patience: int = 5
    min_delta: float = 1e-5
    hidden: tuple[int, ...] = (256, 128)
    window_s: float = 300.0
    stride_s: float = 60.0
    horizon_s: float = 3600.0
    min_target_samples: int = 10
    test_fraction: float = 0.2
    cell_id_feature: bool = False
    # Per-cell models see 5-10x fewer examples than the pooled one; a
    # smaller net keeps them from fitting window noise.
    local_hidden: tuple[int, ...] = (64, 32)
    seed: int = 0


def build_examples(
    df: pd.DataFrame,
    window_s: float = 300.0,
    stride_s: float = 60.0,
    horizon_s: float = 3600.0,
    min_target_samples: int = 10,
) -> list[HourlyExample]:
    """Window-aggregate features against one-hour-ahead latency targets.

    Anchor times run on the stride grid.  For each cell, features average
    that cell's rows over (t - window, t]; the target is the mean/std of
    its latency over (t + horizon - window/2, t + horizon + window/2].
    Anchors lacking feature rows, latency samples in the feature window,
    or min_target_samples latency points in the target window are dropped.
    """
    if len(df) == 0:
        return []
    t_lo = float(df["time_s"].min())
    t_hi = float(df["time_s"].max())
    if t_hi - t_lo <= horizon_s + window_s:
        return []
    half = window_s / 2.0
    first_anchor = math.ceil((t_lo + window_s) / stride_s) * stride_s
    examples: list[HourlyExample] = []
    feat_cols = [
        "cell_load", "speed_mps", "tx_pkts", "rx_pkts", "per", "avg_pkt_bytes",
        "jitter_ms", "throughput_bps", "sinr_db", "rsrp_dbm", "los",
    ]
    for cell_id, grp in df[df["cell_id"] >= 0].groupby("cell_id"):
        grp = grp.sort_values("time_s", kind="stable")
        times = grp["time_s"].to_numpy(float)
        lat = grp["latency_ms"].to_numpy(float)
        mat = grp[feat_cols].to_numpy(float)
        lat_ok = np.isfinite(lat)
        anchor = first_anchor
        while anchor + horizon_s + half <= t_hi:
            f_lo = np.searchsorted(times, anchor - window_s, side="right")
            f_hi = np.searchsorted(times, anchor, side="right")
            g_lo = np.searchsorted(times, anchor + horizon_s - half, side="right")
            g_hi = np.searchsorted(times, anchor + horizon_s + half, side="right")
            if f_hi > f_lo and g_hi > g_lo:
                w_lat = lat[f_lo:f_hi][lat_ok[f_lo:f_hi]]
                t_lat = lat[g_lo:g_hi][lat_ok[g_lo:g_hi]]
                if w_lat.size >= 1 and t_lat.size >= min_target_samples:
                    block = mat[f_lo:f_hi]
                    m = block.mean(axis=0)
                    hour = (anchor % 86400.0) / 3600.0
                    angle = 2.0 * math.pi * hour / 24.0
                    feats = np.array(
                        [
                            m[0], m[1], m[2], m[3], m[4], m[5],
                            float(w_lat.mean()), float(w_lat.std()),
                            m[6], m[7], m[8], m[9], m[10],
                            math.sin(angle), math.cos(angle),
                        ]
                    )
                    target = np.array([float(t_lat.mean()), float(t_lat.std())])
                    # guard against leakage: features end at the anchor,
                    # the target window starts strictly after it
                    assert times[f_hi - 1] <= anchor < anchor + horizon_s - half
                    assert np.all(np.isfinite(feats)) and np.all(np.isfinite(target))
                    examples.append(
                        HourlyExample(int(cell_id), float(anchor), feats, target)
                    )
            anchor += stride_s
    examples.sort(key=lambda e: (e.time_s, e.cell_id))
    return examples


# ---------- normalization ----------


@dataclass(frozen=True)
class Normalizer:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, x: np.ndarray) -> "Normalizer":
        mean = x.mean(axis=0)
        std = x.std(axis=0)
        std = np.where(std < 1e-12, 1.0, std)
        return cls(mean, std)

    def transform(self, x: np.ndarray) -> np.ndarray:
        return (x - self.mean) / self.std

    def inverse(self, z: np.ndarray) -> np.ndarray:
        return z * self.std + self.mean


# ---------- network ----------


class Mlp:
    """Fully connected rectifier network with a linear 2-unit head."""

    def __init__(self, layer_sizes: list[int], rng: np.random.Generator):
        if layer_sizes[-1] != 2:
            raise ValueError("output layer must have 2 units")
        self.layer_sizes = list(layer_sizes)
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(layer_sizes, layer_sizes[1:]):
            scale = math.sqrt(2.0 / fan_in)
            self.weights.append(rng.standard_normal((fan_in, fan_out)) * scale)
            self.biases.append(np.zeros(fan_out))

    def parameters(self) -> list[np.ndarray]:
        return self.weights + self.biases

    def forward(self, x, dropout_rate=0.0, rng=None):
        """Returns (output, cache) -- cache feeds backward()."""
        acts = [x]
        masks = []
        h = x
        n_hidden = len(self.weights) - 1
        for i in range(n_hidden):
            z = h @ self.weights[i] + self.biases[i]
            h = np.maximum(z, 0.0)
            if dropout_rate > 0.0:
                if rng is None:
                    raise ValueError("dropout needs a generator")
                keep = 1.0 - dropout_rate
                mask = (rng.random(h.shape) < keep) / keep
                h = h * mask
                masks.append(mask)
            else:
                masks.append(None)
            acts.append(h)
        out = h @ self.weights[-1] + self.biases[-1]
        return out, (acts, masks)

    def backward(self, cache, grad_out):
        """Gradients of the loss wrt every weight and bias.

        grad_out is dLoss/dOutput for the batch; returns lists matching
        self.weights and self.biases.
        """
        acts, masks = cache
        gw = [None] * len(self.weights)
        gb = [None] * len(self.biases)
        delta = grad_out
        gw[-1] = acts[-1].T @ delta
        gb[-1] = delta.sum(axis=0)
        for i in range(len(self.weights) - 2, -1, -1):
            delta = delta @ self.weights[i + 1].T
            if masks[i] is not None:
                delta = delta * masks[i]
            delta = delta * (acts[i + 1] > 0.0)
            gw[i] = acts[i].T @ delta
            gb[i] = delta.sum(axis=0)
        return gw, gb

    def predict(self, x: np.ndarray) -> np.ndarray:
        out, _ = self.forward(x)
        return out


def mse_loss(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean over batch and both output dims; gradient wrt pred."""
    diff = pred - target
    loss = float(np.mean(diff * diff))
    grad = 2.0 * diff / diff.size
    return loss, grad


class Adam:
    def __init__(self, params: list[np.ndarray], cfg: TrainConfig):
        self.cfg = cfg
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        c = self.cfg
        self.t += 1
        lr_t = c.learning_rate * math.sqrt(1.0 - c.beta2 ** self.t) / (1.0 - c.beta1 ** self.t)
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= c.beta1
            m += (1.0 - c.beta1) * g
            v *= c.beta2
            v += (1.0 - c.beta2) * (g * g)
            p -= lr_t * m / (np.sqrt(v) + c.eps)


def train_mlp(
    x: np.ndarray,
    y: np.ndarray,
    cfg: TrainConfig,
    seed_key: int,
    dropout: float | None = None,
) -> tuple[Mlp, list[float]]:
    """Mini-batch Adam on normalized arrays; returns model + epoch losses.

    Early-stops when the epoch training loss stops improving by min_delta
    for patience consecutive epochs.
    """
    rng = substream(cfg.seed, TRAINING, seed_key)
    sizes = [x.shape[1], *cfg.hidden, 2]
    mlp = Mlp(sizes, rng)
    opt = Adam(mlp.parameters(), cfg)
    rate = cfg.dropout if dropout is None else dropout
    n = x.shape[0]
    losses = []
    best = math.inf
    stall = 0
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for lo in range(0, n, cfg.batch_size):
            idx = order[lo : lo + cfg.batch_size]
            xb, yb = x[idx], y[idx]
            out, cache = mlp.forward(xb, dropout_rate=rate, rng=rng)
            loss, grad = mse_loss(out, yb)
            gw, gb = mlp.backward(cache, grad)
            opt.step(mlp.parameters(), gw + gb)
            total += loss * len(idx)
        epoch_loss = total / n
        losses.append(epoch_loss)
        if best - epoch_loss > cfg.min_delta:
            best = epoch_loss
            stall = 0
        else:
            stall += 1
            if stall >= cfg.patience:
                break
    return mlp, losses


def gradient_check(
    mlp: Mlp, x: np.ndarray, y: np.ndarray, h: float = 1e-4
) -> float:
    """Max relative error between backprop and central differences."""
    out, cache = mlp.forward(x)
    _, grad = mse_loss(out, y)
    gw, gb = mlp.backward(cache, grad)
    analytic = gw + gb
    worst = 0.0
    for p, g in zip(mlp.parameters(), analytic):
        flat = p.ravel()
        gflat = g.ravel()
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + h
            lo_plus, _ = mse_loss(mlp.predict(x), y)
            flat[i] = keep - h
            lo_minus, _ = mse_loss(mlp.predict(x), y)
            flat[i] = keep
            fd = (lo_plus - lo_minus) / (2.0 * h)
            denom = max(1e-8, abs(fd) + abs(gflat[i]))
            worst = max(worst, abs(fd - gflat[i]) / denom)
    return worst


# ---------- predictors ----------


def naive_predict(features: np.ndarray) -> np.ndarray:
    """Persistence baseline: tomorrow looks like the current window."""
    out = features[:, [LATENCY_MEAN_IDX, LATENCY_STD_IDX]].copy()
    out[:, 1] = np.maximum(out[:, 1], 0.0)
    return out


def mlp_predict_ms(
    mlp: Mlp, feats_norm: np.ndarray, target_norm: Normalizer
) -> np.ndarray:
    pred = target_norm.inverse(mlp.predict(feats_norm))
    pred[:, 1] = np.maximum(pred[:, 1], 0.0)
    return pred


# ---------- experiment ----------


@dataclass
class ExperimentReport:
    n_examples: int
    n_train: int
    n_test: int
    split_time_s: float
    mse_norm: dict = field(default_factory=dict)          # predictor -> float
    mse_mean_ms2: dict = field(default_factory=dict)      # mean-dim, raw ms^2
    mse_std_ms2: dict = field(default_factory=dict)       # std-dim, raw ms^2
    abs_err_quantiles_ms: dict = field(default_factory=dict)
    per_cell_mse_norm: dict = field(default_factory=dict)  # cell -> {pred: mse}
    fallback_cells: list = field(default_factory=list)
    epochs_run: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(self.__dict__, indent=2, sort_keys=True)


def _one_hot(cells: np.ndarray, universe: list[int]) -> np.ndarray:
    out = np.zeros((cells.size, len(universe)))
    index = {c: i for i, c in enumerate(universe)}
    for row, c in enumerate(cells):
        out[row, index[c]] = 1.0
    return out


def run_experiment(
    df: pd.DataFrame, cfg: TrainConfig
) -> tuple[ExperimentReport, dict]:
    """Train and score naive, global, and local predictors on one split.

    Returns the report plus an artifact dict holding the trained global
    model and the shared normalizers, ready for save_model.
    """
    examples = build_examples(
        df, cfg.window_s, cfg.stride_s, cfg.horizon_s, cfg.min_target_samples
    )
    if len(examples) < 3 * cfg.batch_size:
        raise ValueError(
            "dataset yields %d examples; too few to train (need >= %d)"
            % (len(examples), 3 * cfg.batch_size)
        )
    feats = np.stack([e.features for e in examples])
    targets = np.stack([e.target for e in examples])
    cells = np.array([e.cell_id for e in examples])
    times = np.array([e.time_s for e in examples])

    n = len(examples)
    n_train = int((1.0 - cfg.test_fraction) * n)
    train_idx = np.arange(n_train)
    test_idx = np.arange(n_train, n)
    split_time = float(times[n_train - 1])

    feat_norm = Normalizer.fit(feats[train_idx])
    target_norm = Normalizer.fit(targets[train_idx])
    fz = feat_norm.transform(feats)
    tz = target_norm.transform(targets)

    universe = sorted(int(c) for c in np.unique(cells))
    if cfg.cell_id_feature:
        fz_global = np.hstack([fz, _one_hot(cells, universe)])
    else:
        fz_global = fz

    report = ExperimentReport(
        n_examples=n, n_train=n_train, n_test=n - n_train, split_time_s=split_time
    )

    preds_ms: dict[str, np.ndarray] = {}
    preds_ms["naive"] = naive_predict(feats[test_idx])

    global_mlp, global_losses = train_mlp(
        fz_global[train_idx], tz[train_idx], cfg, seed_key=0
    )
    report.epochs_run["global"] = len(global_losses)
    preds_ms["global"] = mlp_predict_ms(global_mlp, fz_global[test_idx], target_norm)

    local_pred = np.empty((test_idx.size, 2))
    local_cfg = replace(cfg, hidden=cfg.local_hidden)
    for cell in universe:
        tr = train_idx[cells[train_idx] == cell]
        te_mask = cells[test_idx] == cell
        if tr.size < cfg.batch_size:
            report.fallback_cells.append(cell)
            local_pred[te_mask] = naive_predict(feats[test_idx][te_mask])
            continue
        mlp, losses = train_mlp(fz[tr], tz[tr], local_cfg, seed_key=1 + cell)
        report.epochs_run["local_%d" % cell] = len(losses)
        local_pred[te_mask] = mlp_predict_ms(mlp, fz[test_idx][te_mask], target_norm)
    preds_ms["local"] = local_pred

    true_ms = targets[test_idx]
    true_z = tz[test_idx]
    for name, pred in preds_ms.items():
        pz = target_norm.transform(pred)
        report.mse_norm[name] = float(np.mean((pz - true_z) ** 2))
        report.mse_mean_ms2[name] = float(np.mean((pred[:, 0] - true_ms[:, 0]) ** 2))
        report.mse_std_ms2[name] = float(np.mean((pred[:, 1] - true_ms[:, 1]) ** 2))
        abs_err = np.abs(pred[:, 0] - true_ms[:, 0])
        q = np.quantile(abs_err, (0.05, 0.25, 0.5, 0.75, 0.95))
        report.abs_err_quantiles_ms[name] = [float(v) for v in q]
        per_cell = {}
        for cell in universe:
            m = cells[test_idx] == cell
            if m.any():
                per_cell[str(cell)] = float(np.mean((pz[m] - true_z[m]) ** 2))
        report.per_cell_mse_norm[name] = per_cell
    artifacts = {
        "global_mlp": global_mlp,
        "feat_norm": feat_norm,
        "target_norm": target_norm,
    }
    return report, artifacts


def save_per_cell_csv(report: ExperimentReport, path: str) -> None:
    names = sorted(report.mse_norm)
    cells = sorted(
        {c for per in report.per_cell_mse_norm.values() for c in per}, key=int
    )
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("cell_id," + ",".join("mse_norm_" + n for n in names) + "\n")
        for c in cells:
            vals = [report.per_cell_mse_norm[n].get(c, float("nan")) for n in names]
            fh.write(c + "," + ",".join(repr(v) for v in vals) + "\n")


# ---------- model persistence ----------


def save_model(
    path: str,
    mlp: Mlp,
    feat_norm: Normalizer,
    target_norm: Normalizer,
    config_hash: str,
) -> None:
    payload = {
        "layer_sizes": np.array(mlp.layer_sizes),
        "feat_mean": feat_norm.mean,
        "feat_std": feat_norm.std,
        "target_mean": target_norm.mean,
        "target_std": target_norm.std,
        "config_hash": np.array(config_hash),
        "feature_names": np.array(FEATURE_NAMES),
    }
    for i, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
        payload["w%d" % i] = w
        payload["b%d" % i] = b
    np.savez(path, **payload)


def load_model(path: str) -> tuple[Mlp, Normalizer, Normalizer, str]:
    with np.load(path, allow_pickle=False) as data:
        sizes = [int(v) for v in data["layer_sizes"]]
        mlp = Mlp(sizes, np.random.default_rng(0))
        for i in range(len(mlp.weights)):
            mlp.weights[i] = data["w%d" % i]
            mlp.biases[i] = data["b%d" % i]
        feat_norm = Normalizer(data["feat_mean"], data["feat_std"])
        target_norm = Normalizer(data["target_mean"], data["target_std"])
        config_hash = str(data["config_hash"])
    return mlp, feat_norm, target_norm, config_hash
