"""Synthetic forecasting benchmarks with known temporal/feature saliency.

Eight built-in recipes (SYN1..SYN8) define which features drive the
target, at which lags, and under how much Gaussian noise. Features are
independent AR(1) processes (coefficient 0.8) mixed with a random-period
sinusoid and z-scored; the target is a fixed linear combination of the
important features' current and lagged values plus noise, also z-scored.
Because the generating equation is known, every dataset carries an exact
binary saliency mask over (lookback position, feature).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

AR_COEF = 0.8
SINE_PERIOD_RANGE = (20.0, 60.0)
# The sinusoid dominates the AR noise so targets stay forecastable across
# a long horizon; identifiability of the lag structure is unaffected.
SINE_AMPLITUDE = 6.0
COEF_RANGE = (0.5, 1.0)
DEFAULT_N_FEATURES = 6
DEFAULT_N_SAMPLES = 10_000
DEFAULT_SEED = 42


def _span(lo: int, hi: int) -> tuple[int, ...]:
    return tuple(range(lo, hi + 1))


_SYN5_LAGS = _span(71, 77)
_SYN6_LAGS = _span(48, 57)

# name -> (important lags, important features, target noise sigma)
_BUILTIN_TABLE: dict[str, tuple[tuple[int, ...], tuple[int, ...], float]] = {
    "SYN1": (_span(1, 15), (0, 1), 0.01),
    "SYN2": (
        _span(1, 5) + (9, 10, 15, 16, 18, 20, 25, 26, 35, 36) + _span(50, 52) + _span(91, 95),
        (0, 2),
        0.05,
    ),
    "SYN3": ((9, 10, 15, 16, 18) + _span(20, 25) + (31, 34) + _span(60, 65), (1, 2), 0.08),
    "SYN4": ((9, 10, 15, 16) + _span(18, 21) + (41, 42, 45, 46), (1, 2), 0.10),
    "SYN5": (_SYN5_LAGS, (1, 2), 0.06),
    "SYN6": (_SYN6_LAGS, (0, 2), 0.05),
    "SYN7": ((60,) + _span(62, 69), (0, 1), 0.02),
    # blend of the SYN5 and SYN6 dependency structures
    "SYN8": (tuple(sorted(set(_SYN5_LAGS) | set(_SYN6_LAGS))), (0, 1, 2), 0.11),
}

BUILTIN_NAMES = tuple(_BUILTIN_TABLE)


@dataclass(frozen=True)
class SynthSpec:
    """Declarative recipe for one synthetic dataset."""

    name: str
    important_lags: tuple[int, ...]
    important_features: tuple[int, ...]
    noise_sigma: float
    n_features: int = DEFAULT_N_FEATURES
    n_samples: int = DEFAULT_N_SAMPLES
    seed: int = DEFAULT_SEED

    def __post_init__(self):
        object.__setattr__(self, "important_lags", tuple(sorted(set(int(v) for v in self.important_lags))))
        object.__setattr__(self, "important_features", tuple(sorted(set(int(v) for v in self.important_features))))
        if any(lag < 1 for lag in self.important_lags):
            raise ValueError("lags must be >= 1")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if any(not 0 <= j < self.n_features for j in self.important_features):
            raise ValueError("important_features must index into 0..n_features-1")
        if self.n_features < 1 or self.n_samples < 1:
            raise ValueError("n_features and n_samples must be >= 1")

    @property
    def max_lag(self) -> int:
        return max(self.important_lags, default=0)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "important_lags": list(self.important_lags),
            "important_features": list(self.important_features),
            "noise_sigma": self.noise_sigma,
            "n_features": self.n_features,
            "n_samples": self.n_samples,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SynthSpec":
        return cls(
            name=d["name"],
            important_lags=tuple(d["important_lags"]),
            important_features=tuple(d["important_features"]),
            noise_sigma=float(d["noise_sigma"]),
            n_features=int(d["n_features"]),
            n_samples=int(d["n_samples"]),
            seed=int(d["seed"]),
        )


@dataclass
class SaliencyTruth:
    """Binary ground-truth saliency over (lookback position, feature).

    mask[T - lag, j] is 1 exactly when `lag` is an important lag and j an
    important feature; `temporal` is the feature-wise any.
    """

    mask: np.ndarray
    temporal: np.ndarray = field(init=False)

    def __post_init__(self):
        self.mask = np.asarray(self.mask, dtype=np.int8)
        self.temporal = self.mask.any(axis=1).astype(np.int8)


def builtin_spec(name: str, n_samples: int = DEFAULT_N_SAMPLES, seed: int = DEFAULT_SEED) -> SynthSpec:
    """One of the eight built-in recipes, with optional size/seed overrides."""
    try:
        lags, features, noise = _BUILTIN_TABLE[name]
    except KeyError:
        raise ValueError(f"unknown dataset {name!r}; expected one of {BUILTIN_NAMES}") from None
    return SynthSpec(
        name=name,
        important_lags=lags,
        important_features=features,
        noise_sigma=noise,
        n_samples=n_samples,
        seed=seed,
    )


def _rngs(spec: SynthSpec) -> tuple[np.random.Generator, np.random.Generator, np.random.Generator]:
    feat_ss, coef_ss, noise_ss = np.random.SeedSequence(spec.seed).spawn(3)
    return (
        np.random.default_rng(feat_ss),
        np.random.default_rng(coef_ss),
        np.random.default_rng(noise_ss),
    )


def generate_features(spec: SynthSpec) -> np.ndarray:
    """(n_samples, n_features) matrix of z-scored AR(1)+sinusoid features."""
    rng, _, _ = _rngs(spec)
    n, f = spec.n_samples, spec.n_features
    out = np.empty((n, f))
    t = np.arange(n)
    for j in range(f):
        innovations = rng.normal(0.0, 1.0, size=n)
        series = np.empty(n)
        series[0] = innovations[0]
        for i in range(1, n):
            series[i] = AR_COEF * series[i - 1] + innovations[i]
        period = rng.uniform(*SINE_PERIOD_RANGE)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        series = series + SINE_AMPLITUDE * np.sin(2.0 * np.pi * t / period + phase)
        out[:, j] = (series - series.mean()) / series.std()
    return out


def draw_coefficients(spec: SynthSpec, rng: np.random.Generator | None = None):
    """Per-dataset target coefficients: current-value weights plus lagged
    weights of magnitude U[0.5, 1] with signs alternating by lag order."""
    if rng is None:
        _, rng, _ = _rngs(spec)
    current = {j: rng.uniform(*COEF_RANGE) for j in spec.important_features}
    lagged = {}
    for j in spec.important_features:
        for order, lag in enumerate(spec.important_lags):
            magnitude = rng.uniform(*COEF_RANGE)
            lagged[(j, lag)] = magnitude if order % 2 == 0 else -magnitude
    return current, lagged


def compose_target(
    features: np.ndarray,
    spec: SynthSpec,
    current: dict[int, float],
    lagged: dict[tuple[int, int], float],
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Assemble the target from explicit coefficients; rows before max_lag
    are dropped and the result is z-scored."""
    n = features.shape[0]
    start = spec.max_lag
    if n <= start:
        raise ValueError(f"n_samples {n} <= max lag {start}: no valid rows")
    if rng is None:
        _, _, rng = _rngs(spec)
    rows = np.arange(start, n)
    y = np.zeros(len(rows))
    for j, coef in current.items():
        y += coef * features[rows, j]
    for (j, lag), coef in lagged.items():
        y += coef * features[rows - lag, j]
    if spec.noise_sigma > 0:
        y = y + rng.normal(0.0, spec.noise_sigma, size=len(rows))
    std = y.std()
    if std == 0.0:
        raise ValueError("degenerate target: zero variance")
    return (y - y.mean()) / std


def generate_target(features: np.ndarray, spec: SynthSpec) -> np.ndarray:
    """Target series of length n_samples - max_lag, aligned with
    features[max_lag:]."""
    _, coef_rng, noise_rng = _rngs(spec)
    current, lagged = draw_coefficients(spec, coef_rng)
    return compose_target(features, spec, current, lagged, noise_rng)


def generate_dataset(spec: SynthSpec) -> tuple[np.ndarray, np.ndarray]:
    """(features, target) with the warmup rows already dropped from both."""
    features = generate_features(spec)
    target = generate_target(features, spec)
    return features[spec.max_lag :], target


def ground_truth_mask(spec: SynthSpec, lookback: int) -> SaliencyTruth:
    """Binary (lookback, n_features) mask implied by the generating equation."""
    if lookback <= spec.max_lag:
        raise ValueError(f"lookback {lookback} must exceed the largest lag {spec.max_lag}")
    mask = np.zeros((lookback, spec.n_features), dtype=np.int8)
    for lag in spec.important_lags:
        for j in spec.important_features:
            mask[lookback - lag, j] = 1
    return SaliencyTruth(mask)


# ---------------------------------------------------------------------------
# file formats: CSV data + JSON sidecar, CSV masks


def feature_names(spec: SynthSpec) -> list[str]:
    return [f"feat_{j}" for j in range(spec.n_features)]


def export_dataset(features: np.ndarray, target: np.ndarray, spec: SynthSpec, path) -> Path:
    """Write `<path>` as CSV (features..., target) and `<path stem>.json`
    carrying the spec; 17 significant digits so values round-trip exactly."""
    path = Path(path)
    if features.shape[0] != target.shape[0]:
        raise ValueError("features and target row counts differ")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(feature_names(spec) + ["target"])
        for row, target_value in zip(features, target):
            writer.writerow([f"{v:.17g}" for v in row] + [f"{target_value:.17g}"])
    sidecar = path.with_suffix(".json")
    sidecar.write_text(json.dumps(spec.to_dict(), indent=1, sort_keys=True))
    return path


def load_dataset(path) -> tuple[np.ndarray, np.ndarray, SynthSpec]:
    path = Path(path)
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    spec = SynthSpec.from_dict(json.loads(path.with_suffix(".json").read_text()))
    return data[:, :-1], data[:, -1], spec


def export_mask(truth: SaliencyTruth, path) -> Path:
    path = Path(path)
    np.savetxt(path, truth.mask, fmt="%d", delimiter=",")
    return path


def load_mask(path) -> SaliencyTruth:
    mask = np.loadtxt(path, delimiter=",", dtype=np.int8, ndmin=2)
    return SaliencyTruth(mask)
