"""Quadratic finite-sum problems with commuting (diagonal) curvature.

Every component has the form f_i(x) = 1/2 sum_j a_{ij} x_j^2 - sum_j b_{ij} x_j
in a shared diagonal frame; an optional orthogonal matrix O conjugates the
whole problem (A_i -> O A_i O^T, b_i -> O b_i) without materializing dense
matrices.  Constant offsets are dropped throughout: they do not affect the
iterates, only the attained optimum value.

Sign convention: literal "+ (G/2) x" terms in the two lower-bound
constructions are stored as b = -G/2 (the minus-b parameterization above).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

ORTHOGONALITY_TOL = 1e-12
INVARIANT_TOL = 1e-9


def _frozen_array(values, dtype=np.float64) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Component:
    """One summand: diagonal curvatures a_j >= 0 and linear terms b_j."""

    curvatures: np.ndarray
    linear: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "curvatures", _frozen_array(self.curvatures))
        object.__setattr__(self, "linear", _frozen_array(self.linear))
        if self.curvatures.ndim != 1 or self.linear.ndim != 1:
            raise ValueError("component data must be 1-D")
        if self.curvatures.shape != self.linear.shape:
            raise ValueError("curvatures and linear must have equal length")
        if np.any(self.curvatures < 0):
            raise ValueError("component curvatures must be nonnegative")

    @property
    def dim(self) -> int:
        return self.curvatures.shape[0]


@dataclass(frozen=True)
class Minimizer:
    point: np.ndarray
    value: float


@dataclass(frozen=True)
class Problem:
    """Immutable finite-sum quadratic F(x) = (1/n) sum_i f_i(x).

    Metadata: lam / lam_max bracket the eigenvalues of the mean curvature
    matrix A, smooth_l bounds every per-component curvature, grad_bound is
    the G of the gradient conditions.  `conjugation` (if present) is the
    orthogonal O defining the rotated problem; data stays diagonal.
    """

    components: tuple
    dim: int
    lam: float
    lam_max: float
    smooth_l: float
    grad_bound: float
    conjugation: Optional[np.ndarray] = None
    # cached stacked views, built in __post_init__
    curvature_matrix: np.ndarray = field(init=False, repr=False, compare=False)
    linear_matrix: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        comps = tuple(self.components)
        object.__setattr__(self, "components", comps)
        if len(comps) <= 1:
            raise ValueError("a finite-sum problem needs n > 1 components")
        if any(c.dim != self.dim for c in comps):
            raise ValueError("all components must have dimension dim")
        if not (self.lam > 0 and self.lam_max > 0 and self.smooth_l > 0):
            raise ValueError("lam, lam_max and smooth_l must be positive")
        if self.grad_bound < 0:
            raise ValueError("grad_bound must be nonnegative")
        if self.conjugation is not None:
            o = np.array(self.conjugation, dtype=np.float64)
            if o.shape != (self.dim, self.dim):
                raise ValueError("conjugation must be dim x dim")
            if not _is_orthogonal(o):
                raise ValueError("conjugation matrix is not orthogonal")
            o.flags.writeable = False
            object.__setattr__(self, "conjugation", o)
        cm = _frozen_array([c.curvatures for c in comps])
        lm = _frozen_array([c.linear for c in comps])
        object.__setattr__(self, "curvature_matrix", cm)
        object.__setattr__(self, "linear_matrix", lm)
        self._check_invariants()

    def _check_invariants(self):
        # strong convexity per coordinate; a completely flat coordinate is
        # tolerated only when its linear terms balance out, otherwise the
        # objective has no minimizer
        mean_curv = self.mean_curvature
        mean_lin = self.mean_linear
        for j in range(self.dim):
            if mean_curv[j] >= self.lam - INVARIANT_TOL:
                continue
            if mean_curv[j] == 0.0 and abs(mean_lin[j]) <= INVARIANT_TOL:
                continue
            raise ValueError(
                f"mean curvature {mean_curv[j]!r} of coordinate {j} is below "
                f"lam={self.lam!r} (and the coordinate is not flat-balanced)"
            )
        if np.max(mean_curv) > self.lam_max + INVARIANT_TOL:
            raise ValueError("mean curvature exceeds lam_max")
        if np.max(self.curvature_matrix) > self.smooth_l + INVARIANT_TOL:
            raise ValueError("a component curvature exceeds smooth_l")

    @property
    def n(self) -> int:
        return len(self.components)

    @property
    def mean_curvature(self) -> np.ndarray:
        return self.curvature_matrix.mean(axis=0)

    @property
    def mean_linear(self) -> np.ndarray:
        return self.linear_matrix.mean(axis=0)

    def minimizer(self) -> Minimizer:
        """Global minimizer x* = A^{-1} b, mapped out of the diagonal frame."""
        a_bar = self.mean_curvature
        b_bar = self.mean_linear
        point = np.where(a_bar > 0, b_bar / np.where(a_bar > 0, a_bar, 1.0), 0.0)
        if self.conjugation is not None:
            point = self.conjugation @ point
        value = objective(self, point)
        return Minimizer(point=_frozen_array(point), value=value)

    def to_json_dict(self) -> dict:
        doc = {
            "n": self.n,
            "dim": self.dim,
            "lambda": self.lam,
            "lambda_max": self.lam_max,
            "smooth_l": self.smooth_l,
            "grad_bound": self.grad_bound,
            "components": [
                {"curvatures": c.curvatures.tolist(), "linear": c.linear.tolist()}
                for c in self.components
            ],
        }
        if self.conjugation is not None:
            doc["conjugation"] = self.conjugation.tolist()
        return doc


def _is_orthogonal(o: np.ndarray, tol: float = ORTHOGONALITY_TOL) -> bool:
    return bool(np.max(np.abs(o.T @ o - np.eye(o.shape[0]))) <= tol)


def problem_from_json_dict(doc: dict) -> Problem:
    comps = tuple(
        Component(curvatures=c["curvatures"], linear=c["linear"])
        for c in doc["components"]
    )
    if len(comps) != doc["n"]:
        raise ValueError("component count does not match n")
    return Problem(
        components=comps,
        dim=doc["dim"],
        lam=doc["lambda"],
        lam_max=doc["lambda_max"],
        smooth_l=doc["smooth_l"],
        grad_bound=doc["grad_bound"],
        conjugation=doc.get("conjugation"),
    )


def problem_to_json(p: Problem) -> str:
    return json.dumps(p.to_json_dict())


def problem_from_json(text: str) -> Problem:
    return problem_from_json_dict(json.loads(text))


def _check_construction_args(n: int, G: float, lam: float, lam_max: float):
    if n <= 1 or n % 2 != 0:
        raise ValueError(f"n must be even and > 1, got {n}")
    if G < 0:
        raise ValueError("G must be nonnegative")
    if lam <= 0:
        raise ValueError("lam must be positive")
    if lam_max < lam:
        raise ValueError(f"lam_max={lam_max} must be >= lam={lam}")


def build_ss_construction(n: int, G: float, lam: float, lam_max: float) -> Problem:
    """Two-dimensional single-shuffling worst case.

    Every component carries curvatures (lam, lam_max); the first n/2
    components add +(G/2) x_2 (stored b_2 = -G/2) and the rest subtract it,
    so the mean linear term vanishes, x* is the origin and F(x*) = 0.
    """
    _check_construction_args(n, G, lam, lam_max)
    comps = []
    for i in range(n):
        sign = -1.0 if i < n // 2 else 1.0
        comps.append(Component(curvatures=(lam, lam_max), linear=(0.0, sign * G / 2.0)))
    return Problem(
        components=tuple(comps),
        dim=2,
        lam=lam,
        lam_max=lam_max,
        smooth_l=lam_max,
        grad_bound=G,
    )


def build_rr_construction(n: int, G: float, lam: float, lam_max: float) -> Problem:
    """Three-dimensional random-reshuffling worst case.

    Coordinates 1 and 2 repeat the two-dimensional construction; coordinate 3
    has curvature lam_max on the first n/2 components and 0 on the rest, with
    a balanced +-(G/2) split of linear terms, so its mean curvature is
    lam_max/2 and F(x) = (lam/2)x1^2 + (lam_max/2)x2^2 + (lam_max/4)x3^2.
    Requires lam_max >= 2*lam, otherwise the mean curvature of coordinate 3
    drops below lam and F is no longer lam-strongly convex.
    """
    _check_construction_args(n, G, lam, lam_max)
    if lam_max < 2.0 * lam:
        raise ValueError(
            "the 3-d construction needs lam_max >= 2*lam for lam-strong convexity "
            f"(got lam={lam}, lam_max={lam_max})"
        )
    comps = []
    for i in range(n):
        if i < n // 2:
            comps.append(
                Component(
                    curvatures=(lam, lam_max, lam_max),
                    linear=(0.0, -G / 2.0, -G / 2.0),
                )
            )
        else:
            comps.append(
                Component(curvatures=(lam, lam_max, 0.0), linear=(0.0, G / 2.0, G / 2.0))
            )
    return Problem(
        components=tuple(comps),
        dim=3,
        lam=lam,
        lam_max=lam_max,
        smooth_l=lam_max,
        grad_bound=G,
    )


def _to_diag_frame(p: Problem, x: np.ndarray) -> np.ndarray:
    return x if p.conjugation is None else p.conjugation.T @ x


def objective(p: Problem, x) -> float:
    """F(x), evaluated through the diagonal frame when a conjugation is set."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (p.dim,):
        raise ValueError(f"x has shape {x.shape}, expected ({p.dim},)")
    y = _to_diag_frame(p, x)
    a_bar = p.mean_curvature
    b_bar = p.mean_linear
    return float(0.5 * np.dot(a_bar, y * y) - np.dot(b_bar, y))


def component_objective(p: Problem, i: int, x) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = _to_diag_frame(p, x)
    c = p.components[i]
    return float(0.5 * np.dot(c.curvatures, y * y) - np.dot(c.linear, y))


def component_gradient(p: Problem, i: int, x) -> np.ndarray:
    """grad f_i(x); under conjugation O * grad ftilde_i(O^T x).  0-based i."""
    if not 0 <= i < p.n:
        raise ValueError(f"component index {i} out of range [0, {p.n})")
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (p.dim,):
        raise ValueError(f"x has shape {x.shape}, expected ({p.dim},)")
    y = _to_diag_frame(p, x)
    c = p.components[i]
    g = c.curvatures * y - c.linear
    return g if p.conjugation is None else p.conjugation @ g


def gradient(p: Problem, x) -> np.ndarray:
    """grad F(x) = mean over components of grad f_i(x)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (p.dim,):
        raise ValueError(f"x has shape {x.shape}, expected ({p.dim},)")
    y = _to_diag_frame(p, x)
    g = p.mean_curvature * y - p.mean_linear
    return g if p.conjugation is None else p.conjugation @ g


@dataclass(frozen=True)
class Clause:
    name: str
    passed: bool
    measured: float
    limit: float


@dataclass(frozen=True)
class AssumptionReport:
    clauses: tuple

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.clauses)

    def failed(self) -> list:
        return [c for c in self.clauses if not c.passed]

    def lines(self) -> list:
        out = []
        for c in self.clauses:
            status = "pass" if c.passed else "FAIL"
            out.append(f"{status}  {c.name}: measured={c.measured:.6g} limit={c.limit:.6g}")
        return out


def validate_assumptions(p: Problem, x0, k: int) -> AssumptionReport:
    """Check the problem-class clauses; reports, never raises.

    Clauses: curvatures lie in [lam, lam_max] U {0} and below smooth_l, the
    mean curvature stays in [lam, lam_max], ||grad F(x0)|| <= G, every
    ||grad f_i(x*)|| <= G, and log(nk) * L / (lam n k) <= 1.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    tol = 1e-9
    clauses = []

    cm = p.curvature_matrix
    nonzero = cm[cm > 0]
    range_dev = 0.0
    if nonzero.size:
        above = np.maximum(nonzero - p.lam_max, 0.0)
        below = np.maximum(p.lam - nonzero, 0.0)
        range_dev = float(np.max(above + below))
    clauses.append(
        Clause("component curvatures in [lam, lam_max] or zero", range_dev <= tol, range_dev, 0.0)
    )
    max_curv = float(np.max(cm))
    clauses.append(Clause("component curvature <= L", max_curv <= p.smooth_l + tol, max_curv, p.smooth_l))

    mean_curv = p.mean_curvature
    mn, mx = float(np.min(mean_curv)), float(np.max(mean_curv))
    clauses.append(Clause("mean curvature >= lam (strong convexity)", mn >= p.lam - tol, mn, p.lam))
    clauses.append(Clause("mean curvature <= lam_max (spectral norm)", mx <= p.lam_max + tol, mx, p.lam_max))

    g0 = float(np.linalg.norm(gradient(p, x0)))
    limit_g = p.grad_bound * (1.0 + 1e-12) + 1e-15
    clauses.append(Clause("||grad F(x0)|| <= G", g0 <= limit_g, g0, p.grad_bound))

    xstar = p.minimizer().point
    gstar = max(float(np.linalg.norm(component_gradient(p, i, xstar))) for i in range(p.n))
    clauses.append(Clause("max_i ||grad f_i(x*)|| <= G", gstar <= limit_g, gstar, p.grad_bound))

    nk = p.n * int(k)
    ratio = math.log(nk) * p.smooth_l / (p.lam * nk) if nk > 1 else math.inf
    clauses.append(Clause("log(nk) L / (lam n k) <= 1", ratio <= 1.0 + tol, ratio, 1.0))

    return AssumptionReport(clauses=tuple(clauses))


def conjugate(p: Problem, O) -> Problem:
    """Rotate the problem by orthogonal O (composing with any existing rotation).

    Metadata is unchanged: orthogonal maps are isometries, so eigenvalue and
    gradient-norm bounds carry over.
    """
    O = np.array(O, dtype=np.float64)
    if O.shape != (p.dim, p.dim):
        raise ValueError(f"O has shape {O.shape}, expected ({p.dim}, {p.dim})")
    if not _is_orthogonal(O):
        raise ValueError("O is not orthogonal to 1e-12")
    combined = O if p.conjugation is None else O @ p.conjugation
    return Problem(
        components=p.components,
        dim=p.dim,
        lam=p.lam,
        lam_max=p.lam_max,
        smooth_l=p.smooth_l,
        grad_bound=p.grad_bound,
        conjugation=combined,
    )


def dense_component_matrices(p: Problem, i: int) -> tuple:
    """(A_i, b_i) as dense arrays in the outer frame, for cross-checks."""
    c = p.components[i]
    if p.conjugation is None:
        return np.diag(c.curvatures), c.linear.copy()
    O = p.conjugation
    return O @ np.diag(c.curvatures) @ O.T, O @ c.linear


# Named initializations from the two analyses of the constructions.  No single
# default is blessed; callers pick explicitly.
X0_PRESETS = ("worst-case", "fig1")


def preset_x0(construction: str, preset: str, G: float, lam: float, lam_max: float) -> np.ndarray:
    """Initialization presets.

    "worst-case": (G/lam, 0, ...) -- saturates ||grad F(x0)|| = G.
    "fig1": (-G/(2 lam), -G/(2 lam_max)) -- the experiment initialization;
    for the "rr" construction this belongs to its 2-d reduced variant.
    """
    if preset == "worst-case":
        dim = 2 if construction == "ss" else 3
        x0 = np.zeros(dim)
        x0[0] = G / lam
        return x0
    if preset == "fig1":
        return np.array([-G / (2.0 * lam), -G / (2.0 * lam_max)])
    raise ValueError(f"unknown x0 preset {preset!r}; choose from {X0_PRESETS}")
