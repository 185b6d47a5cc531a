"""From modal samples to the flutter-speed posterior."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import AllRejected, InvalidParameters, TooFewSamples
from .inference import PosteriorChain
from .margin import fit_quadratic_arrays, margin_value
from .prior import ModalPriorSamples

KDE_GRID_POINTS = 2048
MIN_PAIRS = 100


@dataclass(frozen=True, eq=False)
class MarginSampleMatrix:
    values: np.ndarray
    airspeeds: tuple
    n_dropped: int = 0

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True, eq=False)
class BSamples:
    """Admissible ``(B2, B3)`` pairs and the fraction of rows kept."""

    pairs: np.ndarray
    retained_fraction: float
    n_total: int

    def __len__(self):
        return self.pairs.shape[0]

    def __iter__(self):
        return iter(map(tuple, self.pairs))


@dataclass(frozen=True, eq=False)
class FlutterSpeedPosterior:
    speed_samples: np.ndarray
    kde_grid: np.ndarray
    map_estimate: float
    cov: float
    box: dict
    rejected_fraction: float
    bandwidth: float

    @property
    def mean(self) -> float:
        return float(self.speed_samples.mean())

    @property
    def std(self) -> float:
        s = self.speed_samples
        return float(s.std(ddof=1)) if s.size > 1 and np.ptp(s) > 0 else 0.0

    def summary(self) -> dict:
        return {
            "map": self.map_estimate,
            "cov_percent": self.cov,
            "mean": self.mean,
            "std": self.std,
            "box": dict(self.box),
            "rejected_fraction": self.rejected_fraction,
            "n_samples": int(self.speed_samples.size),
            "bandwidth": self.bandwidth,
        }


def _margins_from_modal(modal: np.ndarray, airspeeds) -> MarginSampleMatrix:
    """``modal`` has shape (n, n_u, 4) in ``(omega_1, beta_1, omega_2, beta_2)`` order."""
    F = margin_value(modal[..., 0], modal[..., 1], modal[..., 2], modal[..., 3])
    F = np.atleast_2d(F)
    good = np.all(np.isfinite(F), axis=1)
    return MarginSampleMatrix(values=F[good], airspeeds=tuple(airspeeds), n_dropped=int((~good).sum()))


def margins_from_chain(chain: PosteriorChain, airspeeds: Sequence[float]) -> MarginSampleMatrix:
    n_u = len(airspeeds)
    if chain.states.shape[1] != 8 * n_u:
        raise InvalidParameters(
            f"chain has {chain.states.shape[1]} coordinates, expected {8 * n_u} for {n_u} airspeeds"
        )
    return _margins_from_modal(chain.modal_block(), airspeeds)


def margins_from_prior(samples: ModalPriorSamples) -> MarginSampleMatrix:
    modal = samples.samples.reshape(samples.n_mc, samples.n_u, 4)
    return _margins_from_modal(modal, samples.airspeeds)


def infer_B(margins: MarginSampleMatrix) -> BSamples:
    """Least-squares ``F = B2 U^2 + B3`` per row, keeping rows with B2 < 0 < B3."""
    if len(margins.airspeeds) < 2:
        raise InvalidParameters("need at least two airspeeds")
    U = np.asarray(margins.airspeeds)
    coef = fit_quadratic_arrays(U, margins.values.T)
    B2, B3 = np.atleast_1d(coef[0]), np.atleast_1d(coef[1])
    keep = (B2 < 0) & (B3 > 0)
    n_total = margins.n_rows
    if n_total == 0 or not keep.any():
        raise AllRejected("no margin sample gave an admissible (B2, B3) pair")
    return BSamples(pairs=np.column_stack([B2[keep], B3[keep]]),
                    retained_fraction=float(keep.sum()) / n_total, n_total=n_total)


def silverman_bandwidth(x: np.ndarray) -> float:
    return 1.06 * float(np.std(x, ddof=1)) * x.size ** (-0.2)


def gaussian_kde(x: np.ndarray, grid: np.ndarray, h: float, chunk: int = 256) -> np.ndarray:
    """Gaussian kernel density of samples ``x`` evaluated on ``grid``."""
    out = np.empty_like(grid)
    norm = 1.0 / (x.size * h * math.sqrt(2 * math.pi))
    for start in range(0, grid.size, chunk):
        g = grid[start : start + chunk, None]
        out[start : start + chunk] = np.exp(-0.5 * ((g - x[None, :]) / h) ** 2).sum(axis=1) * norm
    return out


def flutter_speed_posterior(pairs, rejected_fraction: float | None = None) -> FlutterSpeedPosterior:
    """Roots ``sqrt(-B3/B2)``, their KDE, MAP, percent COV and box statistics.

    The box runs MAP - 3 std, lower quartile, MAP, upper quartile, MAP + 3 std.
    """
    if isinstance(pairs, BSamples):
        if rejected_fraction is None:
            rejected_fraction = 1.0 - pairs.retained_fraction
        arr = pairs.pairs
    else:
        arr = np.asarray(list(pairs) if not isinstance(pairs, np.ndarray) else pairs, dtype=float)
    arr = arr.reshape(-1, 2)
    if arr.shape[0] < MIN_PAIRS:
        raise TooFewSamples(f"need at least {MIN_PAIRS} admissible pairs, got {arr.shape[0]}")
    B2, B3 = arr[:, 0], arr[:, 1]
    if np.any(B2 >= 0) or np.any(B3 <= 0):
        raise InvalidParameters("pairs must satisfy B2 < 0 and B3 > 0")
    speeds = np.sqrt(-B3 / B2)
    # identical samples: the rounded mean would leave a spurious ~1e-14 spread
    std = 0.0 if np.ptp(speeds) == 0 else float(speeds.std(ddof=1))
    mean = float(speeds.mean())
    if std == 0:
        h = 0.0
        grid = np.array([speeds[0]])
        density = np.array([1.0])
        map_est = float(speeds[0])
    else:
        h = silverman_bandwidth(speeds)
        grid = np.linspace(speeds.min() - 3 * h, speeds.max() + 3 * h, KDE_GRID_POINTS)
        density = gaussian_kde(speeds, grid, h)
        map_est = float(grid[int(np.argmax(density))])
    q1, q3 = np.percentile(speeds, [25, 75])
    box = {
        "map_minus_3sd": map_est - 3 * std,
        "q1": float(q1),
        "map": map_est,
        "q3": float(q3),
        "map_plus_3sd": map_est + 3 * std,
    }
    return FlutterSpeedPosterior(
        speed_samples=speeds,
        kde_grid=np.column_stack([grid, density]),
        map_estimate=map_est,
        cov=100.0 * std / mean,
        box=box,
        rejected_fraction=float(rejected_fraction or 0.0),
        bandwidth=h,
    )


def posterior_from_chain(chain: PosteriorChain, airspeeds: Sequence[float]) -> FlutterSpeedPosterior:
    margins = margins_from_chain(chain, airspeeds)
    B = infer_B(margins)
    total = margins.n_rows + margins.n_dropped
    rejected = 1.0 - len(B) / total
    return flutter_speed_posterior(B, rejected_fraction=rejected)


def prior_only_flutter_speed(prior_samples: ModalPriorSamples) -> FlutterSpeedPosterior:
    if prior_samples.n_u < 2:
        raise InvalidParameters("need samples at two or more airspeeds")
    margins = margins_from_prior(prior_samples)
    B = infer_B(margins)
    total = margins.n_rows + margins.n_dropped
    return flutter_speed_posterior(B, rejected_fraction=1.0 - len(B) / total)


def write_posterior(post: FlutterSpeedPosterior, directory, stem: str = "flutter_speed") -> list[Path]:
    """Samples CSV, KDE CSV and a JSON summary; returns the written paths."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    samples_path = directory / f"{stem}_samples.csv"
    kde_path = directory / f"{stem}_kde.csv"
    summary_path = directory / f"{stem}_summary.json"
    with open(samples_path, "w", newline="") as fh:
        fh.write("U_f\n")
        fh.writelines(f"{u:.17g}\n" for u in post.speed_samples)
    with open(kde_path, "w", newline="") as fh:
        fh.write("U,density\n")
        fh.writelines(f"{u:.17g},{p:.17g}\n" for u, p in post.kde_grid)
    summary_path.write_text(json.dumps(post.summary(), indent=2, sort_keys=True) + "\n")
    return [samples_path, kde_path, summary_path]
