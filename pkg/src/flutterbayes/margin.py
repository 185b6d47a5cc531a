"""Zimmerman-Weissenburger flutter margin and its airspeed polynomial fits."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .aeroelastic import ModalSolution
from .errors import Inadmissible, NoPositiveRoot, RankDeficient, UndefinedMargin

# |beta_1 + beta_2| below this makes the ratio term undefined.
SUM_DECAY_TOL = 1e-12


@dataclass(frozen=True)
class FlutterMarginValue:
    F: float
    U: float


@dataclass(frozen=True)
class MarginFitQuadratic:
    """``F(U) = B2 U^2 + B3``."""

    B2: float
    B3: float

    @property
    def admissible(self) -> bool:
        return self.B2 < 0 and self.B3 > 0


@dataclass(frozen=True)
class MarginFitQuartic:
    """``F(U) = B1 U^4 + B2 U^2 + B3``."""

    B1: float
    B2: float
    B3: float


def margin_value(omega_1, beta_1, omega_2, beta_2):
    """Vectorised flutter margin.

    Entries where ``|beta_1 + beta_2|`` is below tolerance come back as NaN;
    :func:`flutter_margin` turns that into :class:`UndefinedMargin`.
    """
    w1, b1, w2, b2 = (np.asarray(v, dtype=float) for v in (omega_1, beta_1, omega_2, beta_2))
    half_dw2 = (w2**2 - w1**2) / 2
    half_sw2 = (w2**2 + w1**2) / 2
    half_db2 = (b2**2 - b1**2) / 2
    mean_b_sq2 = 2 * ((b2 + b1) / 2) ** 2
    bsum = b2 + b1
    bad = np.abs(bsum) < SUM_DECAY_TOL
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(bad, np.nan, (b2 - b1) / np.where(bad, 1.0, bsum))
    F = (
        (half_dw2 + half_db2) ** 2
        + 4 * b1 * b2 * (half_sw2 + mean_b_sq2)
        - (ratio * half_dw2 + mean_b_sq2) ** 2
    )
    return F if F.ndim else float(F)


def flutter_margin(modal: ModalSolution) -> FlutterMarginValue:
    if abs(modal.beta_1 + modal.beta_2) < SUM_DECAY_TOL:
        raise UndefinedMargin(f"beta_1 + beta_2 = {modal.beta_1 + modal.beta_2:g}")
    F = margin_value(modal.omega_1, modal.beta_1, modal.omega_2, modal.beta_2)
    return FlutterMarginValue(F=float(F), U=modal.U)


def _split(points: Iterable[FlutterMarginValue]) -> tuple[np.ndarray, np.ndarray]:
    pts = list(points)
    U = np.array([p.U for p in pts], dtype=float)
    F = np.array([p.F for p in pts], dtype=float)
    return U, F


def _design(U: np.ndarray, powers: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
    """Column-scaled design matrix and the scale of each column."""
    umax = float(np.max(np.abs(U))) if U.size else 0.0
    umax = umax if umax > 0 else 1.0
    scales = np.array([umax**p for p in powers])
    X = np.column_stack([U**p for p in powers]) / scales
    return X, scales


def _lstsq(U: np.ndarray, F: np.ndarray, powers: Sequence[int]) -> np.ndarray:
    """Least-squares coefficients for columns ``U**p``; ``F`` may be (n,) or (n, k).

    Normal equations on the column-scaled design.  The right-hand sides are
    formed elementwise, so identical columns of ``F`` give bit-identical fits.
    """
    n_distinct = np.unique(U**2).size
    if U.size < len(powers) or n_distinct < len(powers):
        raise RankDeficient(
            f"need {len(powers)} distinct |U| values, got {n_distinct}"
        )
    X, scales = _design(U, powers)
    G_inv = np.linalg.inv(X.T @ X)
    F2 = F.reshape(F.shape[0], -1)
    rhs = [np.sum(X[:, i, None] * F2, axis=0) for i in range(len(powers))]
    coef = np.array([sum(G_inv[r, i] * rhs[i] for i in range(len(powers)))
                     for r in range(len(powers))])
    coef = (coef.T / scales).T
    return coef.reshape((len(powers),) + F.shape[1:])


def fit_quadratic_arrays(U, F) -> np.ndarray:
    """``(B2, B3)`` for each column of ``F`` (shape (n,) or (n, k))."""
    return _lstsq(np.asarray(U, float), np.asarray(F, float), (2, 0))


def fit_quadratic(points: Iterable[FlutterMarginValue]) -> MarginFitQuadratic:
    """Ordinary least squares of F on (U^2, 1)."""
    U, F = _split(points)
    B2, B3 = fit_quadratic_arrays(U, F)
    return MarginFitQuadratic(float(B2), float(B3))


def fit_quartic(points: Iterable[FlutterMarginValue]) -> MarginFitQuartic:
    U, F = _split(points)
    B1, B2, B3 = _lstsq(U, F, (4, 2, 0))
    return MarginFitQuartic(float(B1), float(B2), float(B3))


def flutter_speed_from_quadratic(fit: MarginFitQuadratic) -> float:
    if not fit.admissible:
        raise Inadmissible(f"need B2 < 0 and B3 > 0, got B2={fit.B2:g}, B3={fit.B3:g}")
    return math.sqrt(-fit.B3 / fit.B2)


def flutter_speed_from_quartic(fit: MarginFitQuartic) -> float:
    """Smallest positive real root of ``B1 U^4 + B2 U^2 + B3``."""
    if fit.B1 == 0:
        if fit.B2 == 0:
            raise NoPositiveRoot("margin model is constant")
        candidates = [-fit.B3 / fit.B2]
    else:
        disc = fit.B2**2 - 4 * fit.B1 * fit.B3
        # a double root can round to a slightly negative discriminant
        if disc < 0 and -disc <= 1e-12 * fit.B2**2:
            disc = 0.0
        if disc < 0:
            raise NoPositiveRoot("U^2 roots are complex")
        sq = math.sqrt(disc)
        # Numerically stable pair of roots in U^2.
        q = -0.5 * (fit.B2 + math.copysign(sq, fit.B2 if fit.B2 != 0 else 1.0))
        candidates = [q / fit.B1]
        if q != 0:
            candidates.append(fit.B3 / q)
    positive = [x for x in candidates if x > 0]
    if not positive:
        raise NoPositiveRoot("no root with U^2 > 0")
    return math.sqrt(min(positive))


def margin_points(modals: Iterable[ModalSolution]) -> list[FlutterMarginValue]:
    return [flutter_margin(m) for m in modals]


def write_margin_csv(path, points: Iterable[FlutterMarginValue]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("U,F\n")
        for p in points:
            fh.write(f"{p.U:.17g},{p.F:.17g}\n")


def read_margin_csv(path) -> list[FlutterMarginValue]:
    out = []
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "U,F":
            raise ValueError(f"unexpected header {header!r}")
        for line in fh:
            if line.strip():
                u, f = line.split(",")
                out.append(FlutterMarginValue(F=float(f), U=float(u)))
    return out
