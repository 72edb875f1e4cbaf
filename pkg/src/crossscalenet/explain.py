"""Temporal saliency from attention, agreement scoring, and the
perturbation-based faithfulness battery (sufficiency, comprehensiveness,
feature ablation, integrated gradients).

Saliency aggregation: at each scale, the mass received by a key patch
(column mean of the patch attention) is multiplied by the within-patch
mass of each position (column mean of the local attention), giving a
per-position score at that scale's resolution; scores are linearly
upsampled to the lookback length, averaged across scales, and
max-normalized. The product form lets either attention path veto
positions it considers irrelevant.

Perturbations replace values with the per-window feature mean (blanking a
z-scored series with zeros would inject the mean anyway; the window mean
is the distribution-faithful choice). Sufficiency/comprehensiveness are
normalized by the error gap between the intact and fully-blanked input,
pinning r=1 to 0 and 1 respectively.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .attention import AttentionRecord
from .data import WindowDataset
from .model import CrossScaleNet
from .synthgen import SaliencyTruth
from .tensor import Tape, Tensor, linear_interp, suspend_tape, sum_all, take_lastdim
from .train import compute_metrics

logger = logging.getLogger(__name__)

DEFAULT_RATIOS = (0.1, 0.2, 0.5)


@dataclass
class SaliencyVector:
    """Nonnegative per-position importance over the lookback, max-normalized."""

    values: np.ndarray
    normalization: str = "max"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1:
            raise ValueError(f"saliency must be a vector, got shape {self.values.shape}")
        if np.any(self.values < 0):
            raise ValueError("saliency values must be nonnegative")


@dataclass
class AgreementScores:
    precision_at_k: float
    rank_auc: float
    k: int

    def to_dict(self) -> dict:
        return {"precision_at_k": self.precision_at_k, "rank_auc": self.rank_auc, "k": self.k}


# ---------------------------------------------------------------------------
# attention -> temporal saliency


def aggregate_saliency(records: list[AttentionRecord], lookback: int) -> SaliencyVector:
    """Fuse attention records from scales >= 2 into one lookback-length vector."""
    if not records:
        raise ValueError(
            "saliency aggregation needs attention records from coarse scales; "
            "configure the model with n_scales >= 2"
        )
    acc = np.zeros(lookback)
    for record in records:
        patch_mass = record.patch_weights.mean(axis=(0, 1))  # (N,) mass per key patch
        local_mass = record.local_weights.mean(axis=(0, 2))  # (N, P) mass per key position
        combined = (patch_mass[:, None] * local_mass).reshape(-1)[: record.seq_len]
        acc += linear_interp(Tensor(combined[None, :]), lookback).data[0]
    acc /= len(records)
    peak = acc.max()
    if peak > 0:
        acc = acc / peak
    return SaliencyVector(acc)


def collect_records(
    model: CrossScaleNet,
    windows: np.ndarray,
    batch_size: int = 256,
    max_windows: int | None = None,
) -> list[AttentionRecord]:
    """Forward a stack of windows and concatenate attention records per scale."""
    if max_windows is not None:
        windows = windows[:max_windows]
    per_scale: dict[int, list[AttentionRecord]] = {}
    with suspend_tape():
        for lo in range(0, len(windows), batch_size):
            _, outputs = model.forward(Tensor(windows[lo : lo + batch_size]))
            for record in outputs.records:
                per_scale.setdefault(record.scale_index, []).append(record)
    merged = []
    for scale_index in sorted(per_scale):
        parts = per_scale[scale_index]
        merged.append(
            AttentionRecord(
                patch_weights=np.concatenate([r.patch_weights for r in parts], axis=0),
                local_weights=np.concatenate([r.local_weights for r in parts], axis=0),
                scale_index=scale_index,
                patch_len=parts[0].patch_len,
                seq_len=parts[0].seq_len,
            )
        )
    return merged


def model_saliency(model: CrossScaleNet, dataset: WindowDataset, split: str = "test") -> SaliencyVector:
    x, _ = dataset.windows(split)
    records = collect_records(model, x)
    return aggregate_saliency(records, dataset.lookback)


# ---------------------------------------------------------------------------
# agreement against ground truth


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """Ranks 1..n with ties sharing their average rank."""
    order = np.argsort(values, kind="mergesort")
    sorted_values = values[order]
    ranks = np.empty(len(values))
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and sorted_values[j + 1] == sorted_values[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def rank_auc(values: np.ndarray, positives: np.ndarray) -> float:
    """Probability a random positive outranks a random negative, ties half."""
    positives = np.asarray(positives, dtype=bool)
    k = int(positives.sum())
    n = len(values)
    if k == 0 or k == n:
        raise ValueError("rank_auc needs both positive and negative positions")
    ranks = _average_ranks(np.asarray(values, dtype=np.float64))
    u = ranks[positives].sum() - k * (k + 1) / 2.0
    return float(u / (k * (n - k)))


def saliency_agreement(saliency: SaliencyVector, truth: SaliencyTruth) -> AgreementScores:
    """precision@k (k = number of truly salient steps) and rank-AUC."""
    values = saliency.values
    temporal = truth.temporal
    if len(values) != len(temporal):
        raise ValueError(f"saliency length {len(values)} != truth length {len(temporal)}")
    k = int(temporal.sum())
    if k == 0:
        raise ValueError("ground truth marks no salient steps")
    top_k = np.argsort(-values, kind="mergesort")[:k]
    precision = float(temporal[top_k].sum() / k)
    return AgreementScores(precision_at_k=precision, rank_auc=rank_auc(values, temporal == 1), k=k)


# ---------------------------------------------------------------------------
# perturbations


def perturb(window: np.ndarray, mask: np.ndarray, mode: str) -> np.ndarray:
    """Mean-replace positions of one (T, F) window.

    keep: positions outside the mask are replaced by the feature's window
    mean; remove: positions inside the mask are replaced. keep(mask) and
    remove(complement) coincide bit-exactly.
    """
    if mode not in ("keep", "remove"):
        raise ValueError(f"mode must be 'keep' or 'remove', got {mode!r}")
    window = np.asarray(window, dtype=np.float64)
    mask = np.asarray(mask)
    if mask.ndim == 1:
        mask = mask[:, None]
    try:
        mask = np.broadcast_to(mask != 0, window.shape)
    except ValueError as exc:
        raise ValueError(f"mask shape {mask.shape} does not broadcast to window {window.shape}") from exc
    means = np.broadcast_to(window.mean(axis=0, keepdims=True), window.shape)
    if mode == "keep":
        return np.where(mask, window, means)
    return np.where(mask, means, window)


def _perturb_batch(windows: np.ndarray, mask: np.ndarray | None, mode: str) -> np.ndarray:
    """Vectorized perturb over (B, T, F); mask None means all positions."""
    if mask is None:
        mask = np.ones(windows.shape[1])
    mask = np.asarray(mask)
    if mask.ndim == 1:
        mask = mask[:, None]
    mask = np.broadcast_to(mask != 0, windows.shape[1:])
    means = np.broadcast_to(windows.mean(axis=1, keepdims=True), windows.shape)
    if mode == "keep":
        return np.where(mask, windows, means)
    return np.where(mask, means, windows)


def _split_mse(model: CrossScaleNet, dataset: WindowDataset, split: str, x: np.ndarray) -> float:
    _, y = dataset.windows(split)
    preds = model.predict(x)[..., dataset.target_columns]
    return compute_metrics(preds, y).mse


def _top_ratio_mask(saliency, lookback: int, ratio: float) -> np.ndarray:
    if not 0.0 < ratio <= 1.0:
        raise ValueError(f"ratio must be in (0, 1], got {ratio}")
    values = saliency.values if isinstance(saliency, SaliencyVector) else np.asarray(saliency)
    if len(values) != lookback:
        raise ValueError(f"saliency length {len(values)} != lookback {lookback}")
    k = math.ceil(ratio * lookback)
    mask = np.zeros(lookback)
    mask[np.argsort(-values, kind="mergesort")[:k]] = 1.0
    return mask


def _normalized_error_gap(e_perturbed: float, e_full: float, e_blank: float, metric: str) -> float:
    gap = e_blank - e_full
    if gap <= 0:
        logger.warning(
            "%s: blanked-input error (%.6g) <= intact error (%.6g); degenerate model, returning 0",
            metric, e_blank, e_full,
        )
        return 0.0
    return float(np.clip((e_perturbed - e_full) / gap, 0.0, 1.0))


def sufficiency(
    model: CrossScaleNet,
    dataset: WindowDataset,
    saliency: SaliencyVector | np.ndarray,
    ratio: float,
    split: str = "test",
) -> float:
    """Error increase when keeping only the top-ratio salient positions,
    normalized to [0, 1] by the blank-input error gap. Lower is better."""
    mask = _top_ratio_mask(saliency, dataset.lookback, ratio)
    x, _ = dataset.windows(split)
    e_full = _split_mse(model, dataset, split, x)
    e_keep = _split_mse(model, dataset, split, _perturb_batch(x, mask, "keep"))
    e_blank = _split_mse(model, dataset, split, _perturb_batch(x, None, "remove"))
    return _normalized_error_gap(e_keep, e_full, e_blank, "sufficiency")


def comprehensiveness(
    model: CrossScaleNet,
    dataset: WindowDataset,
    saliency: SaliencyVector | np.ndarray,
    ratio: float,
    split: str = "test",
) -> float:
    """Error increase when removing the top-ratio salient positions,
    normalized like sufficiency. Higher is better."""
    mask = _top_ratio_mask(saliency, dataset.lookback, ratio)
    x, _ = dataset.windows(split)
    e_full = _split_mse(model, dataset, split, x)
    e_remove = _split_mse(model, dataset, split, _perturb_batch(x, mask, "remove"))
    e_blank = _split_mse(model, dataset, split, _perturb_batch(x, None, "remove"))
    return _normalized_error_gap(e_remove, e_full, e_blank, "comprehensiveness")


def feature_ablation(
    model: CrossScaleNet,
    dataset: WindowDataset,
    channels: list[int] | None = None,
    split: str = "test",
) -> dict[int, float]:
    """Per-channel importance: relative test-error increase when the channel
    is mean-replaced across the whole window. Target channels are excluded
    from the default candidate set."""
    if channels is None:
        channels = [c for c in range(dataset.n_columns) if c not in dataset.target_columns]
    x, _ = dataset.windows(split)
    e_full = _split_mse(model, dataset, split, x)
    denom = max(e_full, 1e-12)
    scores: dict[int, float] = {}
    for channel in channels:
        ablated = x.copy()
        ablated[:, :, channel] = x[:, :, channel].mean(axis=1, keepdims=True)
        scores[channel] = (_split_mse(model, dataset, split, ablated) - e_full) / denom
    return scores


# ---------------------------------------------------------------------------
# integrated gradients


def target_sum_grad_fn(model: CrossScaleNet, target_columns: list[int]):
    """(T, F) window -> (sum of target-channel forecasts, input gradient)."""

    def value_and_grad(window: np.ndarray) -> tuple[float, np.ndarray]:
        with Tape() as tape:
            x = Tensor(np.asarray(window, dtype=np.float64)[None], requires_grad=True)
            forecast, _ = model.forward(x)
            total = sum_all(take_lastdim(forecast, target_columns))
            tape.backward(total)
        return total.item(), x.grad[0]

    return value_and_grad


def integrated_gradients(
    value_and_grad,
    window: np.ndarray,
    steps: int = 64,
    baseline: np.ndarray | None = None,
) -> np.ndarray:
    """Path-integral attribution from a baseline to the window, (T, F).

    Right-endpoint Riemann approximation of the path integral; exact for
    linear models at any step count. The default baseline holds every
    feature at its window mean.
    """
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    window = np.asarray(window, dtype=np.float64)
    if baseline is None:
        baseline = np.broadcast_to(window.mean(axis=0, keepdims=True), window.shape)
    baseline = np.asarray(baseline, dtype=np.float64)
    if baseline.shape != window.shape:
        raise ValueError(f"baseline shape {baseline.shape} != window shape {window.shape}")
    delta = window - baseline
    grad_total = np.zeros_like(window)
    for k in range(1, steps + 1):
        _, grad = value_and_grad(baseline + (k / steps) * delta)
        grad_total += grad
    return delta * grad_total / steps


def ig_attribution_map(
    model: CrossScaleNet,
    dataset: WindowDataset,
    split: str = "test",
    steps: int = 64,
    n_windows: int = 16,
) -> np.ndarray:
    """Mean |IG| over a deterministic sample of windows, shape (T, F)."""
    x, _ = dataset.windows(split)
    if len(x) == 0:
        raise ValueError(f"split {split!r} is empty")
    picks = np.unique(np.linspace(0, len(x) - 1, min(n_windows, len(x)), dtype=int))
    value_and_grad = target_sum_grad_fn(model, dataset.target_columns)
    acc = np.zeros((dataset.lookback, dataset.n_columns))
    for i in picks:
        acc += np.abs(integrated_gradients(value_and_grad, x[i], steps=steps))
    return acc / len(picks)


# ---------------------------------------------------------------------------
# report


@dataclass
class ExplainReport:
    """Everything the explainability battery produces for one model+dataset."""

    lookback: int
    ratios: tuple[float, ...]
    saliency: SaliencyVector
    attribution_map: np.ndarray            # (T, F) mean |IG|
    feature_importance_ablation: dict[str, float]
    feature_importance_ig: dict[str, float]
    sufficiency: dict[float, float]
    comprehensiveness: dict[float, float]
    agreement: AgreementScores | None = None

    def to_dict(self) -> dict:
        return {
            "lookback": self.lookback,
            "ratios": list(self.ratios),
            "saliency": [float(v) for v in self.saliency.values],
            "saliency_normalization": self.saliency.normalization,
            "attribution_map": [[float(v) for v in row] for row in self.attribution_map],
            "feature_importance": {
                "ablation": self.feature_importance_ablation,
                "integrated_gradients": self.feature_importance_ig,
            },
            "sufficiency": {f"{r:g}": v for r, v in self.sufficiency.items()},
            "comprehensiveness": {f"{r:g}": v for r, v in self.comprehensiveness.items()},
            "agreement": self.agreement.to_dict() if self.agreement else None,
        }

    def write_json(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True))
        return path


def build_report(
    model: CrossScaleNet,
    dataset: WindowDataset,
    truth: SaliencyTruth | None = None,
    ratios: tuple[float, ...] = DEFAULT_RATIOS,
    split: str = "test",
    ig_steps: int = 64,
    ig_windows: int = 16,
) -> ExplainReport:
    saliency = model_saliency(model, dataset, split)
    attribution = ig_attribution_map(model, dataset, split, steps=ig_steps, n_windows=ig_windows)

    names = dataset.column_names
    candidates = [c for c in range(dataset.n_columns) if c not in dataset.target_columns]
    ablation_scores = feature_ablation(model, dataset, channels=candidates, split=split)
    ig_per_channel = attribution.mean(axis=0)

    agreement = None
    if truth is not None:
        if truth.mask.shape[0] != dataset.lookback:
            raise ValueError(
                f"truth mask lookback {truth.mask.shape[0]} != dataset lookback {dataset.lookback}"
            )
        agreement = saliency_agreement(saliency, truth)

    return ExplainReport(
        lookback=dataset.lookback,
        ratios=tuple(ratios),
        saliency=saliency,
        attribution_map=attribution,
        feature_importance_ablation={names[c]: float(ablation_scores[c]) for c in candidates},
        feature_importance_ig={names[c]: float(ig_per_channel[c]) for c in candidates},
        sufficiency={r: sufficiency(model, dataset, saliency, r, split) for r in ratios},
        comprehensiveness={r: comprehensiveness(model, dataset, saliency, r, split) for r in ratios},
        agreement=agreement,
    )


# ---------------------------------------------------------------------------
# exports: CSV and 8-bit grayscale PGM heatmaps


def write_pgm(path, array2d: np.ndarray) -> Path:
    """Binary PGM, linearly scaled so the array maximum maps to 255."""
    arr = np.asarray(array2d, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"PGM export needs a 2-d array, got shape {arr.shape}")
    peak = arr.max()
    pixels = np.zeros(arr.shape, dtype=np.uint8)
    if peak > 0:
        pixels = np.round(255.0 * np.clip(arr, 0.0, None) / peak).astype(np.uint8)
    height, width = arr.shape
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{width} {height}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())
    return path


def write_saliency_csv(path, values: np.ndarray) -> Path:
    path = Path(path)
    np.savetxt(path, np.asarray(values), fmt="%.17g", delimiter=",")
    return path


def export_report_files(report: ExplainReport, out_dir) -> list[Path]:
    """report.json, temporal saliency (CSV + 1-pixel-tall PGM), and the
    (features x lookback) attribution heatmap (CSV + PGM)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = [
        report.write_json(out_dir / "report.json"),
        write_saliency_csv(out_dir / "saliency_temporal.csv", report.saliency.values),
        write_pgm(out_dir / "saliency_temporal.pgm", report.saliency.values[None, :]),
        write_saliency_csv(out_dir / "saliency_map.csv", report.attribution_map),
        write_pgm(out_dir / "saliency_map.pgm", report.attribution_map.T),
    ]
    return written
