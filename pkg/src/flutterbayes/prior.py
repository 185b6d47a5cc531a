"""Monte Carlo modal priors from random structural parameters.

Every Monte Carlo row is one structural draw evaluated at all test airspeeds,
which is what couples the modal parameters across airspeeds.  Stacked modal
vectors are ordered ``(omega_1, beta_1, omega_2, beta_2)`` per airspeed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .aeroelastic import SystemParameters, batch_modal
from .errors import (
    DegenerateCovariance,
    DimensionMismatch,
    InvalidParameters,
    RejectionOverflow,
    TooFewSurvivors,
)

RANDOMIZED = ("m", "I_EA", "k_h", "k_alpha", "x_alpha", "a_h")
REGIMES = ("flat", "independent", "joint")
MODAL_NAMES = ("omega_1", "beta_1", "omega_2", "beta_2")
REGULARIZATION = 1e-10


@dataclass(frozen=True)
class ParameterUncertainty:
    """Independent Gaussian scatter on the randomized structural parameters.

    Each randomized parameter has ``std = cov_fraction * |mean|``; the rest
    are held at their nominal values.
    """

    nominal: SystemParameters = field(default_factory=SystemParameters)
    cov_fraction: float = 0.10
    randomized: tuple = RANDOMIZED

    def __post_init__(self):
        if self.cov_fraction < 0:
            raise InvalidParameters("cov_fraction must be non-negative")
        unknown = set(self.randomized) - set(SystemParameters.field_names())
        if unknown:
            raise InvalidParameters(f"unknown randomized parameters: {sorted(unknown)}")

    def mean(self, name: str) -> float:
        return float(getattr(self.nominal, name))

    def std(self, name: str) -> float:
        if name not in self.randomized:
            return 0.0
        return self.cov_fraction * abs(self.mean(name))


@dataclass(frozen=True)
class StructuralDraws:
    samples: list
    n_rejected: int
    columns: dict

    def __len__(self):
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def __getitem__(self, i):
        return self.samples[i]


def _valid_rows(cols: dict) -> np.ndarray:
    off = cols["m"] * cols["c"] * cols["x_alpha"] / 2
    ok = (cols["m"] > 0) & (cols["I_EA"] > 0) & (cols["k_h"] > 0) & (cols["k_alpha"] > 0)
    ok &= np.abs(cols["a_h"]) < 1
    ok &= cols["m"] * cols["I_EA"] - off**2 > 0
    return ok


def draw_structural_samples(unc: ParameterUncertainty, n_mc: int, seed) -> StructuralDraws:
    """Gaussian draws of the structural parameters with rejection of invalid sets."""
    if n_mc < 2:
        raise InvalidParameters("n_mc must be at least 2")
    rng = np.random.default_rng(seed)
    nominal = unc.nominal.to_dict()
    kept = {name: [] for name in unc.randomized}
    n_kept = n_rejected = 0
    while n_kept < n_mc:
        need = n_mc - n_kept
        batch = {name: unc.mean(name) + unc.std(name) * rng.standard_normal(need)
                 for name in unc.randomized}
        full = {k: np.broadcast_to(np.asarray(v, float), (need,)) for k, v in nominal.items()}
        full.update(batch)
        ok = _valid_rows(full)
        n_rejected += int(need - ok.sum())
        if n_rejected > 0.5 * (n_mc + n_rejected):
            raise RejectionOverflow(
                f"{n_rejected} of {n_mc + n_rejected} structural draws rejected; "
                "the Gaussian scatter is too wide"
            )
        for name in unc.randomized:
            kept[name].append(batch[name][ok])
        n_kept += int(ok.sum())
    columns = {k: np.broadcast_to(np.asarray(v, float), (n_mc,)).copy() for k, v in nominal.items()}
    for name in unc.randomized:
        columns[name] = np.concatenate(kept[name])[:n_mc]
    samples = [
        unc.nominal.replace(**{name: float(columns[name][r]) for name in unc.randomized})
        for r in range(n_mc)
    ]
    return StructuralDraws(samples=samples, n_rejected=n_rejected, columns=columns)


@dataclass(frozen=True, eq=False)
class ModalPriorSamples:
    samples: np.ndarray
    airspeeds: tuple
    n_dropped: int = 0

    @property
    def n_mc(self) -> int:
        return self.samples.shape[0]

    @property
    def n_u(self) -> int:
        return len(self.airspeeds)

    def coordinate_names(self) -> list[str]:
        return [f"{name}@{j}" for j in range(self.n_u) for name in MODAL_NAMES]

    def column(self, name: str, j: int) -> np.ndarray:
        return self.samples[:, 4 * j + MODAL_NAMES.index(name)]


def _columns_of(samples) -> dict:
    if isinstance(samples, StructuralDraws):
        return samples.columns
    rows = [s.to_dict() for s in samples]
    if not rows:
        return {}
    return {k: np.array([r[k] for r in rows], dtype=float) for k in rows[0]}


def propagate_modal(samples, airspeeds: Sequence[float], min_survival: float = 0.9) -> ModalPriorSamples:
    """Solve the eigenproblem of every structural draw at every airspeed."""
    airspeeds = tuple(float(u) for u in airspeeds)
    cols = _columns_of(samples)
    n = len(samples)
    if not airspeeds:
        return ModalPriorSamples(samples=np.empty((n, 0)), airspeeds=())
    blocks, alive = [], np.ones(n, dtype=bool)
    for U in airspeeds:
        vals, ok = batch_modal(cols, U)
        blocks.append(vals)
        alive &= ok
    stacked = np.hstack(blocks)[alive]
    if alive.sum() < min_survival * n:
        raise TooFewSurvivors(f"only {int(alive.sum())} of {n} rows have oscillatory modes")
    return ModalPriorSamples(samples=stacked, airspeeds=airspeeds, n_dropped=int(n - alive.sum()))


@dataclass(frozen=True, eq=False)
class GaussianModalPrior:
    regime: str
    airspeeds: tuple
    mu: np.ndarray | None = None
    Sigma: np.ndarray | None = None

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise InvalidParameters(f"unknown prior regime {self.regime!r}")
        object.__setattr__(self, "airspeeds", tuple(float(u) for u in self.airspeeds))
        if self.regime != "flat":
            mu = np.asarray(self.mu, dtype=float)
            Sigma = np.asarray(self.Sigma, dtype=float)
            d = 4 * len(self.airspeeds)
            if mu.shape != (d,) or Sigma.shape != (d, d):
                raise DimensionMismatch(f"expected mean ({d},) and covariance ({d},{d})")
            try:
                chol = np.linalg.cholesky(Sigma)
            except np.linalg.LinAlgError as exc:
                raise DegenerateCovariance("prior covariance is not positive definite") from exc
            object.__setattr__(self, "mu", mu)
            object.__setattr__(self, "Sigma", Sigma)
            object.__setattr__(self, "_chol", chol)
            object.__setattr__(self, "_log_norm",
                               -0.5 * d * math.log(2 * math.pi) - float(np.log(np.diag(chol)).sum()))

    @property
    def dim(self) -> int:
        return 4 * len(self.airspeeds)

    @property
    def log_normalizer(self) -> float:
        """``-0.5 log((2 pi)^d |Sigma|)`` for the Gaussian regimes."""
        return self._log_norm

    def marginal_std(self) -> np.ndarray:
        return np.sqrt(np.diag(self.Sigma))

    def to_json(self) -> str:
        payload = {
            "regime": self.regime,
            "airspeeds": list(self.airspeeds),
            "mu": None if self.mu is None else self.mu.tolist(),
            "Sigma": None if self.Sigma is None else self.Sigma.tolist(),
        }
        return json.dumps(payload, indent=1) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "GaussianModalPrior":
        d = json.loads(text)
        return cls(regime=d["regime"], airspeeds=d["airspeeds"], mu=d["mu"], Sigma=d["Sigma"])


def fit_prior(samples: ModalPriorSamples, regime: str) -> GaussianModalPrior:
    if regime not in REGIMES:
        raise InvalidParameters(f"unknown prior regime {regime!r}")
    if regime == "flat":
        return GaussianModalPrior(regime="flat", airspeeds=samples.airspeeds)
    d = 4 * samples.n_u
    if samples.n_mc < d + 1:
        raise InvalidParameters(f"need at least {d + 1} Monte Carlo rows, have {samples.n_mc}")
    mu = samples.samples.mean(axis=0)
    Sigma = np.cov(samples.samples, rowvar=False).reshape(d, d)
    Sigma = 0.5 * (Sigma + Sigma.T)
    if regime == "independent":
        mask = np.kron(np.eye(samples.n_u), np.ones((4, 4))).astype(bool)
        Sigma = np.where(mask, Sigma, 0.0)
    Sigma = Sigma + REGULARIZATION * np.mean(np.diag(Sigma)) * np.eye(d)
    return GaussianModalPrior(regime=regime, airspeeds=samples.airspeeds, mu=mu, Sigma=Sigma)


def log_prior(prior: GaussianModalPrior, stacked_modal) -> float:
    x = np.asarray(stacked_modal, dtype=float)
    if x.shape != (prior.dim,):
        raise DimensionMismatch(f"expected a vector of length {prior.dim}, got shape {x.shape}")
    if prior.regime == "flat":
        return 0.0 if np.all(x > 0) else -math.inf
    z = np.linalg.solve(prior._chol, x - prior.mu)
    return prior._log_norm - 0.5 * float(z @ z)


def write_prior(prior: GaussianModalPrior, path) -> None:
    Path(path).write_text(prior.to_json())


def read_prior(path) -> GaussianModalPrior:
    return GaussianModalPrior.from_json(Path(path).read_text())


def write_prior_samples(samples: ModalPriorSamples, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("# airspeeds=" + ";".join(f"{u:.17g}" for u in samples.airspeeds) + "\n")
        fh.write(",".join(samples.coordinate_names()) + "\n")
        for row in samples.samples:
            fh.write(",".join(f"{x:.17g}" for x in row) + "\n")


def read_prior_samples(path) -> ModalPriorSamples:
    with open(path) as fh:
        first = fh.readline().strip()
        speeds = tuple(float(x) for x in first.split("=", 1)[1].split(";") if x)
        fh.readline()
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    return ModalPriorSamples(samples=data.reshape(-1, 4 * len(speeds)), airspeeds=speeds)
