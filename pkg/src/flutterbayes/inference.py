"""Adaptive Metropolis sampling of envelope and modal parameters.

State layout, per airspeed: ``(a_1, a_2, b_1, b_2, omega_1, omega_2, beta_1,
beta_2)``.  The full state concatenates airspeeds in record order.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import least_squares

from .errors import DimensionMismatch, InitializationFailure, InvalidParameters, StuckChain
from .prior import GaussianModalPrior, log_prior
from .signal_model import FreeDecayRecord, damped_cosines, wrap_phase

STATE_NAMES = ("a_1", "a_2", "b_1", "b_2", "omega_1", "omega_2", "beta_1", "beta_2")
# Positions of (omega_1, beta_1, omega_2, beta_2) inside one 8-block.
_MODAL_IN_BLOCK = np.array([4, 6, 5, 7])
_SCALE_AM = 2.38**2


@dataclass(frozen=True)
class MCMCConfig:
    n_steps: int = 200_000
    n_burn: int = 50_000
    adapt_start: int = 1_000
    adapt_interval: int = 100
    initial_step_scale: float = 1.0
    regularization_epsilon: float = 1e-10
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.n_burn < self.n_steps:
            raise InvalidParameters("need 0 <= n_burn < n_steps")
        if self.adapt_start < 100:
            raise InvalidParameters("adapt_start must be at least 100")
        if self.adapt_interval < 1:
            raise InvalidParameters("adapt_interval must be positive")
        if not self.initial_step_scale > 0:
            raise InvalidParameters("initial_step_scale must be positive")


@dataclass(frozen=True, eq=False)
class PosteriorChain:
    states: np.ndarray
    log_densities: np.ndarray
    acceptance_rate: float
    names: tuple = ()
    airspeeds: tuple = ()

    @property
    def n_kept(self) -> int:
        return self.states.shape[0]

    def modal_block(self) -> np.ndarray:
        """``(n_kept, n_u, 4)`` array of ``(omega_1, beta_1, omega_2, beta_2)``."""
        n_u = self.states.shape[1] // 8
        blocks = self.states.reshape(-1, n_u, 8)
        return blocks[:, :, _MODAL_IN_BLOCK]


def state_names(n_u: int) -> tuple:
    return tuple(f"{name}@{j}" for j in range(n_u) for name in STATE_NAMES)


def stacked_modal(state: np.ndarray) -> np.ndarray:
    """Reorder a state into the prior's stacked ``(omega_1, beta_1, omega_2, beta_2)`` layout."""
    blocks = np.asarray(state, dtype=float).reshape(-1, 8)
    return blocks[:, _MODAL_IN_BLOCK].ravel()


def canonicalize(state: np.ndarray) -> np.ndarray:
    """Map a state to its representative under the likelihood's exact symmetries.

    Negative amplitudes become positive with a half-turn of phase, phases are
    wrapped to (-pi, pi], and modes are relabelled so that omega_1 <= omega_2.
    """
    x = np.array(state, dtype=float).reshape(-1, 8)
    for k in (0, 1):
        neg = x[:, k] < 0
        x[neg, k] = -x[neg, k]
        x[neg, 2 + k] += math.pi
    swap = x[:, 4] > x[:, 5]
    if swap.any():
        x[np.ix_(swap, [0, 1, 2, 3, 4, 5, 6, 7])] = x[np.ix_(swap, [1, 0, 3, 2, 5, 4, 7, 6])]
    x[:, 2:4] = wrap_phase(x[:, 2:4])
    return x.ravel()


@dataclass(frozen=True, eq=False)
class InferenceProblem:
    records: tuple
    prior: GaussianModalPrior
    gamma: tuple = None

    def __post_init__(self):
        records = tuple(self.records)
        if not records:
            raise InvalidParameters("need at least one record")
        object.__setattr__(self, "records", records)
        if self.gamma is None:
            object.__setattr__(self, "gamma", tuple(r.gamma_true for r in records))
        else:
            object.__setattr__(self, "gamma", tuple(float(g) for g in self.gamma))
        if len(self.gamma) != len(records) or any(not g > 0 for g in self.gamma):
            raise InvalidParameters("need one positive noise variance per record")
        speeds = tuple(r.U for r in records)
        if len(self.prior.airspeeds) != len(speeds) or not np.allclose(
            self.prior.airspeeds, speeds, rtol=1e-9, atol=1e-9
        ):
            raise DimensionMismatch(
                f"record airspeeds {speeds} do not match prior airspeeds {self.prior.airspeeds}"
            )
        lengths = {r.N for r in records}
        if len(lengths) == 1:
            object.__setattr__(self, "_t", np.vstack([r.t for r in records]))
            object.__setattr__(self, "_u", np.vstack([r.u for r in records]))
        else:
            object.__setattr__(self, "_t", None)
            object.__setattr__(self, "_u", None)

    @property
    def n_u(self) -> int:
        return len(self.records)

    @property
    def dim(self) -> int:
        return 8 * self.n_u

    @property
    def airspeeds(self) -> tuple:
        return tuple(r.U for r in self.records)

    def log_likelihoods(self, state) -> np.ndarray:
        x = np.asarray(state, dtype=float).reshape(self.n_u, 8)
        out = np.empty(self.n_u)
        if self._t is not None:
            model = damped_cosines(*(x[:, k : k + 1] for k in range(8)), self._t)
            sse = np.sum((self._u - model) ** 2, axis=1)
            n = self._t.shape[1]
            g = np.asarray(self.gamma)
            return -0.5 * n * np.log(2 * np.pi * g) - 0.5 * sse / g
        for j, rec in enumerate(self.records):
            model = damped_cosines(*x[j], rec.t)
            resid = rec.u - model
            g = self.gamma[j]
            out[j] = -0.5 * rec.N * math.log(2 * math.pi * g) - 0.5 * float(resid @ resid) / g
        return out

    def residuals(self, state) -> np.ndarray:
        """Whitened residuals of all records, concatenated."""
        x = np.asarray(state, dtype=float).reshape(self.n_u, 8)
        return np.concatenate([
            (rec.u - damped_cosines(*x[j], rec.t)) / math.sqrt(self.gamma[j])
            for j, rec in enumerate(self.records)
        ])

    def digest(self) -> str:
        h = hashlib.sha256()
        for rec, g in zip(self.records, self.gamma):
            h.update(np.ascontiguousarray(rec.t).tobytes())
            h.update(np.ascontiguousarray(rec.u).tobytes())
            h.update(repr((rec.U, g)).encode())
        h.update(self.prior.to_json().encode())
        return h.hexdigest()


def log_posterior(problem: InferenceProblem, state) -> float:
    """Sum of record log-likelihoods plus the modal log-prior (envelopes are flat)."""
    state = np.asarray(state, dtype=float)
    if state.shape != (problem.dim,):
        raise DimensionMismatch(f"state must have length {problem.dim}")
    lp = log_prior(problem.prior, stacked_modal(state))
    if not math.isfinite(lp):
        return -math.inf
    return float(problem.log_likelihoods(state).sum()) + lp


# --------------------------------------------------------------------------
# Initialization


def _envelope_lsq(t, u, omega, beta):
    """Best (a_1, a_2, b_1, b_2) for fixed modal values, plus the residual."""
    cols = []
    for w, b in zip(omega, beta):
        e = np.exp(-b * t)
        cols += [e * np.cos(w * t), -e * np.sin(w * t)]
    X = np.column_stack(cols)
    coef, *_ = np.linalg.lstsq(X, u, rcond=None)
    resid = u - X @ coef
    a = [math.hypot(coef[0], coef[1]), math.hypot(coef[2], coef[3])]
    b = [math.atan2(coef[1], coef[0]), math.atan2(coef[3], coef[2])]
    return np.array(a + b), resid


def spectral_modal_guess(record: FreeDecayRecord, n_pad: int = 16) -> np.ndarray:
    """Coarse ``(omega_1, omega_2, beta_1, beta_2)`` from the record alone.

    Frequencies are the two largest peaks of the zero-padded spectrum; decay
    rates come from a small grid search on the linear-envelope residual.
    """
    t, u = record.t, record.u - record.u.mean()
    dt = float(np.median(np.diff(t)))
    n = t.size * n_pad
    spec = np.abs(np.fft.rfft(u * np.hanning(t.size), n=n))
    freqs = 2 * np.pi * np.fft.rfftfreq(n, d=dt)
    peaks = np.flatnonzero((spec[1:-1] > spec[:-2]) & (spec[1:-1] >= spec[2:])) + 1
    peaks = peaks[np.argsort(spec[peaks])[::-1]]
    if peaks.size == 0:
        w = np.array([freqs[1], freqs[2]])
    elif peaks.size == 1:
        w = np.array([freqs[peaks[0]] * 0.5, freqs[peaks[0]]])
    else:
        w = np.sort(freqs[peaks[:2]])
    grid = (0.02, 0.1, 0.3, 0.6, 1.0, 2.0)
    best, best_val = None, math.inf
    for b1 in grid:
        for b2 in grid:
            _, resid = _envelope_lsq(t, u, w, (b1, b2))
            val = float(resid @ resid)
            if val < best_val:
                best, best_val = (b1, b2), val
    return np.array([w[0], w[1], best[0], best[1]])


def _refine_block(record: FreeDecayRecord, modal0: np.ndarray) -> np.ndarray:
    """Nonlinear least-squares polish of one airspeed's modal values (variable projection)."""
    t, u = record.t, record.u

    def resid(p):
        return _envelope_lsq(t, u, p[:2], p[2:])[1]

    lo = np.array([1e-6, 1e-6, -np.inf, -np.inf])
    fit = least_squares(resid, modal0, bounds=(lo, np.inf), x_scale="jac")
    modal = fit.x
    env, _ = _envelope_lsq(t, u, modal[:2], modal[2:])
    return np.concatenate([env, modal])


def _prior_whitener(problem: InferenceProblem):
    """Map a state to whitened prior residuals ``L^-1 (modal - mu)``."""
    L = np.linalg.cholesky(problem.prior.Sigma)
    mu = problem.prior.mu
    perm = np.concatenate([8 * j + _MODAL_IN_BLOCK for j in range(problem.n_u)])

    def whiten(x):
        return np.linalg.solve(L, x[perm] - mu)

    return whiten


def posterior_mode(problem: InferenceProblem, x0) -> np.ndarray:
    """Gauss-Newton search for the posterior mode starting from ``x0``.

    Frequencies and decay rates are kept positive; the Gaussian prior enters
    as whitened pseudo-residuals.
    """
    x0 = canonicalize(x0)
    lo = np.full(problem.dim, -np.inf)
    for j in range(problem.n_u):
        lo[8 * j + 4 : 8 * j + 8] = 1e-9
    x0 = np.maximum(x0, lo + 1e-9)
    if problem.prior.regime == "flat":
        fun = problem.residuals
    else:
        whiten = _prior_whitener(problem)

        def fun(x):
            return np.concatenate([problem.residuals(x), whiten(x)])

    fit = least_squares(fun, x0, bounds=(lo, np.inf), x_scale="jac", max_nfev=2000)
    return canonicalize(fit.x)


def initial_state(problem: InferenceProblem) -> np.ndarray:
    """Start point for the chain: the (approximate) posterior mode.

    Each airspeed block is first fitted to its record alone, with the modal
    search started at the prior mean (Gaussian regimes) or at a spectral
    estimate (flat regime); the stacked result is then polished against the
    full log-posterior.
    """
    blocks = []
    for j, rec in enumerate(problem.records):
        if problem.prior.regime == "flat":
            modal0 = spectral_modal_guess(rec)
        else:
            w1, b1, w2, b2 = problem.prior.mu[4 * j : 4 * j + 4]
            modal0 = np.array([w1, w2, b1, b2])
        blocks.append(_refine_block(rec, modal0))
    return posterior_mode(problem, np.concatenate(blocks))


def laplace_covariance(problem: InferenceProblem, state: np.ndarray) -> np.ndarray:
    """Gauss-Newton posterior covariance at ``state`` (likelihood plus Gaussian prior)."""
    x = np.asarray(state, dtype=float)
    r0 = problem.residuals(x)
    J = np.empty((r0.size, x.size))
    for k in range(x.size):
        h = 1e-6 * max(abs(x[k]), 1e-3)
        xp = x.copy()
        xp[k] += h
        xm = x.copy()
        xm[k] -= h
        J[:, k] = -(problem.residuals(xp) - problem.residuals(xm)) / (2 * h)
    H = J.T @ J
    if problem.prior.regime != "flat":
        perm = np.concatenate([8 * j + _MODAL_IN_BLOCK for j in range(problem.n_u)])
        P = np.linalg.inv(problem.prior.Sigma)
        H[np.ix_(perm, perm)] += P
    H = 0.5 * (H + H.T)
    w, V = np.linalg.eigh(H)
    w = np.maximum(w, 1e-12 * w.max())
    return (V / w) @ V.T


# --------------------------------------------------------------------------
# Sampler


def adaptive_metropolis(
    log_density: Callable[[np.ndarray], float],
    x0,
    config: MCMCConfig,
    initial_cov=None,
    canonical: Callable[[np.ndarray], np.ndarray] | None = None,
    names: Sequence[str] = (),
    max_init_attempts: int = 10_000,
) -> PosteriorChain:
    """Random-walk Metropolis with Haario-style covariance adaptation.

    After ``adapt_start`` steps the Gaussian proposal covariance becomes
    ``(2.38^2 / d) (C_t + eps I)`` where ``C_t`` is the covariance of the
    whole history, refreshed every ``adapt_interval`` steps.  ``canonical``
    maps a stored state to its symmetry representative; the density must be
    invariant under it.
    """
    rng = np.random.default_rng(config.seed)
    x = np.array(x0, dtype=float)
    d = x.size
    if initial_cov is None:
        initial_cov = np.eye(d)
    cov0 = np.atleast_2d(np.asarray(initial_cov, dtype=float)) * config.initial_step_scale**2
    chol = np.linalg.cholesky(cov0 + 1e-300 * np.eye(d))

    lp = log_density(x)
    attempts = 0
    while not math.isfinite(lp):
        attempts += 1
        if attempts > max_init_attempts:
            raise InitializationFailure(f"no finite-density start in {max_init_attempts} attempts")
        x = np.array(x0, dtype=float) + chol @ rng.standard_normal(d)
        lp = log_density(x)

    n_keep = config.n_steps - config.n_burn
    states = np.empty((n_keep, d))
    dens = np.empty(n_keep)
    s_sum = np.zeros(d)
    s_outer = np.zeros((d, d))
    accepted = 0
    eps_eye = config.regularization_epsilon * np.eye(d)
    scale = _SCALE_AM / d

    for step in range(config.n_steps):
        if step >= config.adapt_start and (step - config.adapt_start) % config.adapt_interval == 0:
            n = step
            mean = s_sum / n
            emp = (s_outer - n * np.outer(mean, mean)) / (n - 1)
            try:
                chol = np.linalg.cholesky(scale * (0.5 * (emp + emp.T) + eps_eye))
            except np.linalg.LinAlgError:
                pass
        prop = x + chol @ rng.standard_normal(d)
        lp_prop = log_density(prop)
        if math.log(rng.random()) < lp_prop - lp:
            x, lp = prop, lp_prop
            accepted += 1
        s_sum += x
        s_outer += np.outer(x, x)
        if step >= config.n_burn:
            k = step - config.n_burn
            states[k] = x if canonical is None else canonical(x)
            dens[k] = lp

    rate = accepted / config.n_steps
    if rate < 0.01:
        raise StuckChain(f"acceptance rate {rate:.4f} below 0.01")
    return PosteriorChain(states=states, log_densities=dens, acceptance_rate=rate, names=tuple(names))


def run_chain(problem: InferenceProblem, config: MCMCConfig, x0=None) -> PosteriorChain:
    """Sample the joint posterior of all airspeed blocks in one chain."""
    if x0 is None:
        x0 = initial_state(problem)
    x0 = np.asarray(x0, dtype=float)
    cov0 = laplace_covariance(problem, x0)

    def target(x):
        return log_posterior(problem, canonicalize(x))

    chain = adaptive_metropolis(target, x0, config, initial_cov=cov0, canonical=canonicalize,
                                names=state_names(problem.n_u))
    return PosteriorChain(states=chain.states, log_densities=chain.log_densities,
                          acceptance_rate=chain.acceptance_rate, names=chain.names,
                          airspeeds=problem.airspeeds)


# --------------------------------------------------------------------------
# Diagnostics


def integrated_autocorr_time(x: np.ndarray, c: float = 5.0) -> float:
    """Sokal-windowed integrated autocorrelation time of a 1-D series."""
    x = np.asarray(x, dtype=float)
    n = x.size
    x = x - x.mean()
    var = float(x @ x) / n
    if var == 0:
        return float("nan")
    m = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, n=m)
    acf = np.fft.irfft(f * np.conj(f), n=m)[:n] / (n * var)
    taus = 2.0 * np.cumsum(acf) - 1.0
    window = np.arange(n) >= c * taus
    idx = int(np.argmax(window)) if window.any() else n - 1
    return float(taus[idx])


def chain_diagnostics(chain: PosteriorChain) -> dict:
    if chain.n_kept < 100:
        raise InvalidParameters("need at least 100 kept states for diagnostics")
    names = chain.names or tuple(f"x{k}" for k in range(chain.states.shape[1]))
    std = chain.states.std(axis=0, ddof=1)
    return {
        "acceptance_rate": chain.acceptance_rate,
        "n_kept": chain.n_kept,
        "coordinates": {
            name: {
                "mean": float(chain.states[:, k].mean()),
                "std": float(std[k]),
                "tau": integrated_autocorr_time(chain.states[:, k]),
                "constant": bool(std[k] == 0),
            }
            for k, name in enumerate(names)
        },
    }


# --------------------------------------------------------------------------
# Persistence


def write_chain(chain: PosteriorChain, path) -> None:
    names = chain.names or tuple(f"x{k}" for k in range(chain.states.shape[1]))
    with open(path, "w", newline="") as fh:
        fh.write(",".join(("log_density",) + tuple(names)) + "\n")
        for lp, row in zip(chain.log_densities, chain.states):
            fh.write(f"{lp:.17g}," + ",".join(f"{v:.17g}" for v in row) + "\n")


def read_chain(path, acceptance_rate: float = float("nan"), airspeeds: Sequence[float] = ()) -> PosteriorChain:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    data = data.reshape(-1, len(header))
    return PosteriorChain(states=data[:, 1:], log_densities=data[:, 0], acceptance_rate=acceptance_rate,
                          names=tuple(header[1:]), airspeeds=tuple(airspeeds))


def write_manifest(path, config: MCMCConfig, problem: InferenceProblem, chain: PosteriorChain,
                   extra: dict | None = None) -> None:
    payload = {
        "config": asdict(config),
        "problem_sha256": problem.digest(),
        "regime": problem.prior.regime,
        "airspeeds": list(problem.airspeeds),
        "acceptance_rate": chain.acceptance_rate,
        "n_kept": chain.n_kept,
    }
    payload.update(extra or {})
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
