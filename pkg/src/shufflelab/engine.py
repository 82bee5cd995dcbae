"""SGD execution under three sampling schemes, stepwise and in closed form.

RNG contract: all randomness comes from numpy's PCG64 generator seeded with
the run seed.  Permutations use Fisher-Yates sweeping indices high to low,
with the n-1 bounded draws taken in a single vectorized `integers` call; the
with-replacement scheme draws one uniform index array of length n per epoch.
The identifier below names that consumption scheme and is echoed in every
trajectory so outputs can be traced to the generator contract.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import model
from .model import Problem, objective

RNG_ALGORITHM_ID = "numpy-pcg64/fisher-yates-high-to-low/v1"


class Scheme(enum.Enum):
    WITH_REPLACEMENT = "wr"
    SINGLE_SHUFFLE = "ss"
    RANDOM_RESHUFFLE = "rr"

    @classmethod
    def from_tag(cls, tag: str) -> "Scheme":
        for s in cls:
            if s.value == tag:
                return s
        raise ValueError(f"unknown scheme tag {tag!r}; choose from wr, ss, rr")


@dataclass(frozen=True)
class RunConfig:
    """Everything needed for a bit-reproducible run."""

    scheme: Scheme
    eta: float
    epochs: int
    x0: np.ndarray
    seed: int
    store_all: bool = False

    def __post_init__(self):
        object.__setattr__(self, "x0", np.array(self.x0, dtype=np.float64))
        self.x0.flags.writeable = False
        if self.eta < 0:
            raise ValueError("eta must be nonnegative")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must fit in 64 unsigned bits")


@dataclass(frozen=True)
class EpochMap:
    """Per-coordinate affine summary of one epoch: x -> contraction*x + eta*noise."""

    contraction: np.ndarray
    noise: np.ndarray


@dataclass(frozen=True)
class Trajectory:
    """End-of-epoch iterates x_1..x_k and their objective values."""

    points: np.ndarray  # (k, d)
    losses: np.ndarray  # (k,)
    config: RunConfig
    rng_algorithm_id: str = RNG_ALGORITHM_ID
    all_points: Optional[np.ndarray] = None  # (n*k + 1, d) when store_all

    @property
    def final_point(self) -> np.ndarray:
        return self.points[-1]

    @property
    def final_loss(self) -> float:
        return float(self.losses[-1])


def recommended_eta(n: int, k: int, lam: float) -> float:
    """The step-size rule log(nk) / (lam * n * k) (natural log)."""
    if lam <= 0:
        raise ValueError("lam must be positive")
    nk = n * k
    if nk <= 1:
        raise ValueError(f"n*k must exceed 1 for a positive step size, got {nk}")
    return math.log(nk) / (lam * nk)


def sample_permutation(n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform permutation of range(n) by high-to-low Fisher-Yates.

    The n-1 bounded draws j_i ~ U{0..i} for i = n-1..1 come from one
    vectorized `rng.integers` call; consumption is deterministic per seed.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    perm = list(range(n))
    if n == 1:
        return np.array(perm, dtype=np.int64)
    draws = rng.integers(0, np.arange(n, 1, -1))
    for i in range(n - 1, 0, -1):
        j = draws[n - 1 - i]
        perm[i], perm[j] = perm[j], perm[i]
    return np.array(perm, dtype=np.int64)


def _warn_if_large_eta(p: Problem, eta: float):
    if eta * p.smooth_l > 1.0 + 1e-12:
        warnings.warn(
            f"eta*L = {eta * p.smooth_l:.4g} > 1: contraction factors leave [0, 1]",
            RuntimeWarning,
            stacklevel=3,
        )


def _epoch_sequence(p: Problem, scheme: Scheme, rng: np.random.Generator,
                    fixed_perm: Optional[np.ndarray]) -> np.ndarray:
    if scheme is Scheme.WITH_REPLACEMENT:
        return rng.integers(0, p.n, size=p.n)
    if scheme is Scheme.SINGLE_SHUFFLE:
        return fixed_perm
    return sample_permutation(p.n, rng)


def run_sgd(p: Problem, cfg: RunConfig, perm_log: Optional[list] = None) -> Trajectory:
    """Execute n*k explicit gradient steps, recording end-of-epoch iterates.

    Index selection per epoch: with-replacement draws n independent uniform
    indices, single shuffling reuses one start-of-run permutation, random
    reshuffling draws a fresh permutation.  `perm_log`, when given, collects
    every sampled index sequence (for scheme-separation checks).
    """
    if cfg.x0.shape != (p.dim,):
        raise ValueError(f"x0 has shape {cfg.x0.shape}, expected ({p.dim},)")
    _warn_if_large_eta(p, cfg.eta)
    rng = np.random.default_rng(cfg.seed)
    fixed_perm = None
    if cfg.scheme is Scheme.SINGLE_SHUFFLE:
        fixed_perm = sample_permutation(p.n, rng)
        if perm_log is not None:
            perm_log.append(fixed_perm.copy())
    x = cfg.x0.copy()
    points = np.empty((cfg.epochs, p.dim))
    losses = np.empty(cfg.epochs)
    all_points = [x.copy()] if cfg.store_all else None
    for t in range(cfg.epochs):
        seq = _epoch_sequence(p, cfg.scheme, rng, fixed_perm)
        if perm_log is not None and cfg.scheme is not Scheme.SINGLE_SHUFFLE:
            perm_log.append(np.array(seq))
        for i in seq:
            x = x - cfg.eta * model.component_gradient(p, int(i), x)
            if all_points is not None:
                all_points.append(x.copy())
        points[t] = x
        losses[t] = objective(p, x)
    return Trajectory(
        points=points,
        losses=losses,
        config=cfg,
        all_points=np.array(all_points) if all_points is not None else None,
    )


def sequence_map(p: Problem, seq, eta: float) -> EpochMap:
    """Affine epoch summary for an arbitrary index sequence, diagonal frame.

    contraction_j = prod_i (1 - eta a_{seq(i), j}) and
    noise_j = sum_i b_{seq(i), j} * prod_{l > i} (1 - eta a_{seq(l), j}),
    so applying x -> contraction*x + eta*noise equals the explicit steps.
    """
    seq = np.asarray(seq, dtype=np.int64)
    factors = 1.0 - eta * p.curvature_matrix[seq]  # (n, d)
    b = p.linear_matrix[seq]
    # suffix[i] = prod of factors strictly after position i
    suffix = np.ones_like(factors)
    np.cumprod(factors[:0:-1], axis=0, out=suffix[-2::-1])
    contraction = suffix[0] * factors[0]
    noise = np.einsum("ij,ij->j", b, suffix)
    return EpochMap(contraction=contraction, noise=noise)


def epoch_map(p: Problem, perm, eta: float) -> EpochMap:
    """Per-epoch affine map for a permutation (contraction is order-free)."""
    perm = np.asarray(perm, dtype=np.int64)
    if sorted(perm.tolist()) != list(range(p.n)):
        raise ValueError("perm is not a permutation of range(n)")
    return sequence_map(p, perm, eta)


def _geometric_factor(s: np.ndarray, t: int) -> np.ndarray:
    """(1 - s^t) / (1 - s) with the exact s == 1 limit replaced by t."""
    s = np.asarray(s, dtype=np.float64)
    out = np.full_like(s, float(t))
    ok = s != 1.0
    out[ok] = (1.0 - s[ok] ** t) / (1.0 - s[ok])
    return out


def run_sgd_closed_form(p: Problem, cfg: RunConfig,
                        perm_log: Optional[list] = None) -> Trajectory:
    """Trajectory via per-epoch affine maps instead of explicit steps.

    Consumes the generator exactly like `run_sgd`, so the two agree per seed
    (to rounding).  Single shuffling uses the geometric closed form
    x_t = S^t x0 + eta * (1-S^t)/(1-S) * X; the other schemes compose their
    per-epoch maps.  Zero-curvature directions (S == 1) take the t-limit.
    Only end-of-epoch iterates exist here; per-step history (store_all)
    requires run_sgd.
    """
    if cfg.x0.shape != (p.dim,):
        raise ValueError(f"x0 has shape {cfg.x0.shape}, expected ({p.dim},)")
    _warn_if_large_eta(p, cfg.eta)
    rng = np.random.default_rng(cfg.seed)
    O = p.conjugation
    y0 = cfg.x0 if O is None else O.T @ cfg.x0
    k = cfg.epochs
    ys = np.empty((k, p.dim))
    if cfg.scheme is Scheme.SINGLE_SHUFFLE:
        perm = sample_permutation(p.n, rng)
        if perm_log is not None:
            perm_log.append(perm.copy())
        m = sequence_map(p, perm, cfg.eta)
        for t in range(1, k + 1):
            ys[t - 1] = m.contraction**t * y0 + cfg.eta * _geometric_factor(m.contraction, t) * m.noise
    else:
        y = y0.copy()
        for t in range(k):
            seq = _epoch_sequence(p, cfg.scheme, rng, None)
            if perm_log is not None:
                perm_log.append(np.array(seq))
            m = sequence_map(p, seq, cfg.eta)
            y = m.contraction * y + cfg.eta * m.noise
            ys[t] = y
    points = ys if O is None else ys @ O.T
    losses = np.array([objective(p, points[t]) for t in range(k)])
    return Trajectory(points=points, losses=losses, config=cfg)


def write_trajectory_csv(traj: Trajectory, path) -> None:
    """CSV with `epoch,x_1..x_d,loss` rows under `#` metadata lines."""
    d = traj.points.shape[1]
    cfg = traj.config
    lines = [
        f"# scheme={cfg.scheme.value} eta={cfg.eta!r} epochs={cfg.epochs} seed={cfg.seed}",
        f"# x0={','.join(repr(v) for v in cfg.x0.tolist())}",
        f"# rng_algorithm_id={traj.rng_algorithm_id}",
        "epoch," + ",".join(f"x_{j + 1}" for j in range(d)) + ",loss",
    ]
    for t in range(traj.points.shape[0]):
        coords = ",".join(repr(v) for v in traj.points[t].tolist())
        lines.append(f"{t + 1},{coords},{float(traj.losses[t])!r}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
