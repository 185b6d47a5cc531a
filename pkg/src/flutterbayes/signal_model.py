"""Free-decay measurement model: synthetic records and Gaussian likelihood."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .aeroelastic import ModalSolution, SystemParameters, modal_eigenvectors
from .errors import InvalidParameters, NonPositiveVariance, ZeroSignal

DEFAULT_N_SAMPLES = 200
DEFAULT_SAMPLE_RATE = 100.0  # Hz
DOF_INDEX = {"heave": 0, "pitch": 1}


def wrap_phase(b):
    """Reduce angles to (-pi, pi]."""
    out = np.pi - np.mod(np.pi - np.asarray(b, dtype=float), 2 * np.pi)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class EnvelopeParameters:
    a_1: float
    a_2: float
    b_1: float
    b_2: float

    def __post_init__(self):
        object.__setattr__(self, "b_1", wrap_phase(self.b_1))
        object.__setattr__(self, "b_2", wrap_phase(self.b_2))

    def swapped(self) -> "EnvelopeParameters":
        return EnvelopeParameters(self.a_2, self.a_1, self.b_2, self.b_1)


@dataclass(frozen=True)
class NoiseModel:
    gamma: float

    def __post_init__(self):
        if not self.gamma > 0:
            raise NonPositiveVariance(f"noise variance must be positive (got {self.gamma})")


@dataclass(frozen=True, eq=False)
class FreeDecayRecord:
    t: np.ndarray
    u: np.ndarray
    U: float
    gamma_true: float
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        u = np.asarray(self.u, dtype=float)
        if t.ndim != 1 or t.shape != u.shape or t.size < 1:
            raise InvalidParameters("t and u must be 1-D arrays of equal nonzero length")
        if np.any(np.diff(t) <= 0):
            raise InvalidParameters("time grid must be strictly increasing")
        t.setflags(write=False)
        u.setflags(write=False)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "u", u)

    @property
    def N(self) -> int:
        return self.t.size


def default_time_grid(n: int = DEFAULT_N_SAMPLES, rate: float = DEFAULT_SAMPLE_RATE) -> np.ndarray:
    return np.arange(n) / rate


def damped_cosines(a1, a2, b1, b2, w1, w2, be1, be2, t):
    """Two-mode damped cosine superposition; broadcasting over leading axes."""
    return (a1 * np.exp(-be1 * t) * np.cos(w1 * t + b1)
            + a2 * np.exp(-be2 * t) * np.cos(w2 * t + b2))


def clean_response(env: EnvelopeParameters, modal: ModalSolution, t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    return damped_cosines(env.a_1, env.a_2, env.b_1, env.b_2,
                          modal.omega_1, modal.omega_2, modal.beta_1, modal.beta_2, t)


def envelope_from_initial_condition(
    params: SystemParameters,
    U: float,
    h0: float = 0.01,
    alpha0: float = 0.05,
    dof: str = "pitch",
) -> tuple[EnvelopeParameters, ModalSolution]:
    """Amplitudes and phases of the measured dof after release from rest.

    The initial state ``(h0, alpha0, 0, 0)`` is expanded on the state-matrix
    eigenvectors; each conjugate pair contributes ``2|z| e^{-beta t} cos(omega t + arg z)``.
    """
    vals, vecs = modal_eigenvectors(params, U)
    V = np.column_stack([vecs[:, 0], vecs[:, 0].conj(), vecs[:, 1], vecs[:, 1].conj()])
    coeffs = np.linalg.solve(V, np.array([h0, alpha0, 0.0, 0.0], dtype=complex))
    row = DOF_INDEX[dof]
    z1 = coeffs[0] * vecs[row, 0]
    z2 = coeffs[2] * vecs[row, 1]
    env = EnvelopeParameters(2 * abs(z1), 2 * abs(z2), float(np.angle(z1)), float(np.angle(z2)))
    modal = ModalSolution(float(vals[0].imag), float(-vals[0].real),
                          float(vals[1].imag), float(-vals[1].real), float(U))
    return env, modal


def synthesize_record(
    env: EnvelopeParameters,
    modal: ModalSolution,
    t,
    noise_rms_fraction: float,
    rng_seed: int | None,
) -> FreeDecayRecord:
    """Clean response plus white Gaussian noise scaled to a fraction of its rms."""
    if noise_rms_fraction < 0:
        raise InvalidParameters("noise_rms_fraction must be non-negative")
    t = np.asarray(t, dtype=float)
    clean = clean_response(env, modal, t)
    rms = math.sqrt(float(np.mean(clean**2)))
    if noise_rms_fraction > 0 and rms == 0:
        raise ZeroSignal("cannot scale noise to a zero signal")
    std = noise_rms_fraction * rms
    rng = np.random.default_rng(rng_seed)
    noise = rng.standard_normal(t.size) * std
    return FreeDecayRecord(t=t, u=clean + noise, U=float(modal.U), gamma_true=std**2,
                           seed=rng_seed, meta={"noise_rms_fraction": noise_rms_fraction})


def log_likelihood(record: FreeDecayRecord, env: EnvelopeParameters, modal: ModalSolution,
                   gamma: float) -> float:
    if not gamma > 0:
        raise NonPositiveVariance(f"noise variance must be positive (got {gamma})")
    resid = record.u - clean_response(env, modal, record.t)
    return -0.5 * record.N * math.log(2 * math.pi * gamma) - 0.5 * float(resid @ resid) / gamma


def write_record(record: FreeDecayRecord, path) -> None:
    """CSV of (t, u) plus a ``.json`` sidecar with airspeed, variance and seed."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        fh.write("t,u\n")
        for tk, uk in zip(record.t, record.u):
            fh.write(f"{tk:.17g},{uk:.17g}\n")
    meta = {"U": record.U, "gamma_true": record.gamma_true, "seed": record.seed, **record.meta}
    path.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def read_record(path) -> FreeDecayRecord:
    path = Path(path)
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    meta = json.loads(path.with_suffix(".json").read_text())
    U = meta.pop("U")
    gamma = meta.pop("gamma_true")
    seed = meta.pop("seed", None)
    return FreeDecayRecord(t=data[:, 0], u=data[:, 1], U=U, gamma_true=gamma, seed=seed, meta=meta)
