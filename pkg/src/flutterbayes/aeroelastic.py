"""Two-dof pitch-plunge typical section with quasi-steady aerodynamics.

The airfoil heaves (``h``, positive down) and pitches (``alpha``) about an
elastic axis located ``a_h`` semi-chords aft of mid-chord.  Structural
damping is Rayleigh-proportional and calibrated at the coupled undamped
natural frequencies of the wind-off system.  State vector is
``(h, alpha, h_dot, alpha_dot)`` and ``x_dot = A x``.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg

from .errors import (
    DegenerateFrequencies,
    InvalidParameters,
    NoBracket,
    RealRoots,
    SingularMass,
)

__all__ = [
    "SystemParameters",
    "RayleighCoefficients",
    "AeroelasticMatrices",
    "ModalSolution",
    "rayleigh_coefficients",
    "wind_off_frequencies",
    "assemble_matrices",
    "state_matrix",
    "modal_solve",
    "modal_curve",
    "deterministic_flutter_speed",
    "min_decay_rate",
    "modal_eigenvectors",
    "batch_modal",
]

# Relative size of Im(s) below which an eigenvalue is treated as real.
_REAL_ROOT_TOL = 1e-9


@dataclass(frozen=True)
class SystemParameters:
    """Physical constants of the typical section (SI units).

    Defaults are the nominal values used in the reference study.
    ``apply_span_scaling`` multiplies the aerodynamic stiffness and damping
    contributions by ``span``.
    """

    m: float = 50.0
    I_EA: float = 0.25
    c: float = 0.2
    span: float = 1.0
    k_h: float = 3000.0
    k_alpha: float = 150.0
    x_alpha: float = 0.25
    a_h: float = -0.45
    rho: float = 1.19
    xi_1: float = 0.02
    xi_2: float = 0.02
    apply_span_scaling: bool = True

    def __post_init__(self):
        problems = []
        for name in ("m", "I_EA", "k_h", "k_alpha", "rho", "c", "span"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                problems.append(f"{name} must be positive and finite (got {value!r})")
        if not abs(self.a_h) < 1:
            problems.append(f"|a_h| must be < 1 (got {self.a_h!r})")
        if not math.isfinite(self.x_alpha):
            problems.append("x_alpha must be finite")
        for name in ("xi_1", "xi_2"):
            value = getattr(self, name)
            if not 0 <= value < 1:
                problems.append(f"{name} must lie in [0, 1) (got {value!r})")
        if not problems:
            off = self.m * self.c * self.x_alpha / 2
            if self.m * self.I_EA - off * off <= 0:
                problems.append("structural mass matrix is not positive definite")
        if problems:
            raise InvalidParameters("; ".join(problems))

    @property
    def semi_chord(self) -> float:
        return self.c / 2

    def replace(self, **changes) -> "SystemParameters":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in dataclasses.fields(cls)]


@dataclass(frozen=True)
class RayleighCoefficients:
    alpha_0: float
    alpha_1: float


@dataclass(frozen=True)
class AeroelasticMatrices:
    """Second-order system ``M q'' + C_U q' + K_U q = 0`` at one airspeed."""

    M: np.ndarray
    K_U: np.ndarray
    C_U: np.ndarray
    B_str: np.ndarray
    U: float


@dataclass(frozen=True)
class ModalSolution:
    """Frequencies (rad/s) and decay rates (1/s, positive means stable).

    The eigenvalue pairs of the state matrix are ``-beta_i +/- i omega_i``.
    """

    omega_1: float
    beta_1: float
    omega_2: float
    beta_2: float
    U: float = float("nan")

    def as_array(self) -> np.ndarray:
        """Return ``(omega_1, beta_1, omega_2, beta_2)``."""
        return np.array([self.omega_1, self.beta_1, self.omega_2, self.beta_2])

    def swapped(self) -> "ModalSolution":
        return ModalSolution(self.omega_2, self.beta_2, self.omega_1, self.beta_1, self.U)

    @property
    def min_decay(self) -> float:
        return min(self.beta_1, self.beta_2)


def rayleigh_coefficients(params: SystemParameters, omega_i: float, omega_j: float) -> RayleighCoefficients:
    """Solve ``xi_k = alpha_0 / (2 omega_k) + alpha_1 omega_k / 2`` for k = i, j."""
    if not (omega_i > 0 and omega_j > 0):
        raise InvalidParameters("reference frequencies must be positive")
    if omega_i == omega_j:
        raise DegenerateFrequencies(f"reference frequencies coincide ({omega_i})")
    lhs = 0.5 * np.array([[1.0 / omega_i, omega_i], [1.0 / omega_j, omega_j]])
    alpha_0, alpha_1 = np.linalg.solve(lhs, [params.xi_1, params.xi_2])
    return RayleighCoefficients(float(alpha_0), float(alpha_1))


def _structural_mass(params: SystemParameters) -> np.ndarray:
    off = params.m * params.c * params.x_alpha / 2
    M = np.array([[params.m, off], [off, params.I_EA]])
    if np.linalg.det(M) <= 0:
        raise SingularMass("structural mass matrix is not positive definite")
    return M


def wind_off_frequencies(params: SystemParameters) -> tuple[float, float]:
    """Coupled undamped natural frequencies of (M, K_str), ascending."""
    M = _structural_mass(params)
    K = np.diag([params.k_h, params.k_alpha])
    w2 = scipy.linalg.eigh(K, M, eigvals_only=True)
    return float(np.sqrt(w2[0])), float(np.sqrt(w2[1]))


def assemble_matrices(params: SystemParameters, U: float) -> AeroelasticMatrices:
    if U < 0:
        raise InvalidParameters(f"airspeed must be non-negative (got {U})")
    M = _structural_mass(params)
    K_str = np.diag([params.k_h, params.k_alpha])
    w_i, w_j = wind_off_frequencies(params)
    ray = rayleigh_coefficients(params, w_i, w_j)
    B_str = ray.alpha_0 * M + ray.alpha_1 * K_str

    rho, c, a = params.rho, params.c, params.a_h
    scale = params.span if params.apply_span_scaling else 1.0
    fwd, aft = 0.5 + a, 0.5 - a
    K_aero = np.array([
        [0.0, rho * U**2 * c * math.pi],
        [0.0, -rho * U**2 * c**2 * math.pi / 2 * fwd],
    ])
    C_aero = np.array([
        [rho * U * c * math.pi, rho * U / 2 * c**2 * math.pi * aft],
        [-rho * U / 2 * c**2 * math.pi * fwd,
         -rho * U * c * math.pi * (c**2 * aft * fwd / 4 - c**2 / 16)],
    ])
    if U == 0:
        K_U, C_U = K_str.copy(), B_str.copy()
    else:
        K_U = K_str + scale * K_aero
        C_U = B_str + scale * C_aero
    return AeroelasticMatrices(M=M, K_U=K_U, C_U=C_U, B_str=B_str, U=float(U))


def state_matrix(params: SystemParameters, U: float) -> np.ndarray:
    """4x4 first-order system matrix ``[[0, I], [-M^-1 K, -M^-1 C]]``."""
    mats = assemble_matrices(params, U)
    Minv_K = np.linalg.solve(mats.M, mats.K_U)
    Minv_C = np.linalg.solve(mats.M, mats.C_U)
    return np.block([[np.zeros((2, 2)), np.eye(2)], [-Minv_K, -Minv_C]])


def _oscillatory_pairs(A: np.ndarray, U: float):
    """Eigenvalues/vectors with Im > 0, ascending in frequency."""
    vals, vecs = np.linalg.eig(A)
    scale = max(np.abs(vals).max(), 1.0)
    upper = vals.imag > _REAL_ROOT_TOL * scale
    if upper.sum() != 2:
        raise RealRoots(f"state matrix has real eigenvalues at U={U:g} m/s", airspeed=U)
    idx = np.flatnonzero(upper)
    idx = idx[np.argsort(vals[idx].imag)]
    return vals[idx], vecs[:, idx]


def modal_solve(params: SystemParameters, U: float) -> ModalSolution:
    """Aeroelastic frequencies and decay rates at airspeed ``U``."""
    vals, _ = _oscillatory_pairs(state_matrix(params, U), U)
    return ModalSolution(
        omega_1=float(vals[0].imag),
        beta_1=float(-vals[0].real),
        omega_2=float(vals[1].imag),
        beta_2=float(-vals[1].real),
        U=float(U),
    )


def modal_eigenvectors(params: SystemParameters, U: float):
    """Upper-half-plane eigenvalues and their right eigenvectors (columns)."""
    return _oscillatory_pairs(state_matrix(params, U), U)


def modal_curve(params: SystemParameters, grid: Iterable[float]) -> list[ModalSolution]:
    """Solve along an increasing airspeed grid keeping branch identity.

    At each point the two modes are assigned to the previous point's branches
    by nearest-neighbour matching in (omega, beta), so a branch keeps its label
    even if the loci cross.
    """
    grid = [float(u) for u in grid]
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise InvalidParameters("airspeed grid must be strictly increasing")
    if grid and grid[0] < 0:
        raise InvalidParameters("airspeed grid must be non-negative")
    out: list[ModalSolution] = []
    for U in grid:
        sol = modal_solve(params, U)
        if out:
            prev = out[-1].as_array()
            cur = sol.as_array()
            keep = np.sum((cur - prev) ** 2)
            swap = np.sum((cur[[2, 3, 0, 1]] - prev) ** 2)
            if swap < keep:
                sol = sol.swapped()
        out.append(sol)
    return out


def min_decay_rate(params: SystemParameters, U: float) -> float:
    return modal_solve(params, U).min_decay


def deterministic_flutter_speed(
    params: SystemParameters,
    bracket: Sequence[float] = (10.0, 80.0),
    rtol: float = 1e-6,
    max_iter: int = 200,
) -> float:
    """Airspeed at which the least-damped mode reaches zero decay.

    Plain bisection on ``U -> min(beta_1, beta_2)``; the function is
    continuous but has kinks where the least-damped mode changes.
    """
    lo, hi = float(bracket[0]), float(bracket[1])
    f_lo, f_hi = min_decay_rate(params, lo), min_decay_rate(params, hi)
    if f_lo == 0:
        return lo
    if f_hi == 0:
        return hi
    if not (f_lo > 0 > f_hi):
        raise NoBracket(
            f"min decay rate does not change sign on [{lo}, {hi}] "
            f"({f_lo:.4g}, {f_hi:.4g})"
        )
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        f_mid = min_decay_rate(params, mid)
        if f_mid > 0:
            lo = mid
        elif f_mid < 0:
            hi = mid
        else:
            return mid
        if hi - lo <= rtol * mid:
            break
    return 0.5 * (lo + hi)


def batch_modal(columns: dict, U: float) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised :func:`modal_solve` over many parameter sets at one airspeed.

    ``columns`` maps every :class:`SystemParameters` field to a 1-D array (or
    scalar).  Returns an ``(n, 4)`` array of ``(omega_1, beta_1, omega_2,
    beta_2)`` and a boolean mask of rows whose eigenvalues were all complex;
    rows failing the mask hold NaN.
    """
    n = max(np.size(v) for v in columns.values())
    col = {k: np.broadcast_to(np.asarray(v, dtype=float), (n,)) for k, v in columns.items()}
    m, I, c, x_a, a = col["m"], col["I_EA"], col["c"], col["x_alpha"], col["a_h"]
    k_h, k_a, rho = col["k_h"], col["k_alpha"], col["rho"]
    span_on = col.get("apply_span_scaling", np.ones(n)).astype(bool)
    scale = np.where(span_on, col["span"], 1.0)

    off = m * c * x_a / 2
    M = np.zeros((n, 2, 2))
    M[:, 0, 0], M[:, 0, 1], M[:, 1, 0], M[:, 1, 1] = m, off, off, I
    det_M = m * I - off**2

    # Wind-off coupled frequencies: det(K - lam M) = 0.
    qa, qb, qc = det_M, -(m * k_a + I * k_h), k_h * k_a
    root = np.sqrt(qb**2 - 4 * qa * qc)
    lam_lo = (-qb - root) / (2 * qa)
    lam_hi = (-qb + root) / (2 * qa)
    w_i, w_j = np.sqrt(lam_lo), np.sqrt(lam_hi)
    # 0.5 [[1/w_i, w_i], [1/w_j, w_j]] [a0, a1]^T = [xi_1, xi_2]^T
    det_R = 0.25 * (w_j / w_i - w_i / w_j)
    a0 = 0.5 * (w_j * col["xi_1"] - w_i * col["xi_2"]) / det_R
    a1 = 0.5 * (col["xi_2"] / w_i - col["xi_1"] / w_j) / det_R

    fwd, aft = 0.5 + a, 0.5 - a
    K = np.zeros((n, 2, 2))
    K[:, 0, 0] = k_h
    K[:, 1, 1] = k_a
    C = a0[:, None, None] * M + a1[:, None, None] * K
    K[:, 0, 1] += scale * rho * U**2 * c * math.pi
    K[:, 1, 1] += -scale * rho * U**2 * c**2 * math.pi / 2 * fwd
    C[:, 0, 0] += scale * rho * U * c * math.pi
    C[:, 0, 1] += scale * rho * U / 2 * c**2 * math.pi * aft
    C[:, 1, 0] += -scale * rho * U / 2 * c**2 * math.pi * fwd
    C[:, 1, 1] += -scale * rho * U * c * math.pi * (c**2 * aft * fwd / 4 - c**2 / 16)

    Minv = np.linalg.inv(M)
    A = np.zeros((n, 4, 4))
    A[:, 0, 2] = A[:, 1, 3] = 1.0
    A[:, 2:, :2] = -Minv @ K
    A[:, 2:, 2:] = -Minv @ C
    vals = np.linalg.eigvals(A)
    tol = _REAL_ROOT_TOL * np.maximum(np.abs(vals).max(axis=1), 1.0)
    upper = vals.imag > tol[:, None]
    ok = upper.sum(axis=1) == 2
    out = np.full((n, 4), np.nan)
    if ok.any():
        v = vals[ok]
        up = upper[ok]
        # Push non-upper eigenvalues to the end, then order the two by frequency.
        key = np.where(up, v.imag, np.inf)
        order = np.argsort(key, axis=1)[:, :2]
        sel = np.take_along_axis(v, order, axis=1)
        out[ok, 0] = sel[:, 0].imag
        out[ok, 1] = -sel[:, 0].real
        out[ok, 2] = sel[:, 1].imag
        out[ok, 3] = -sel[:, 1].real
    return out, ok
