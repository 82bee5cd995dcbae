"""Envelope shapes with calibrated stand-in constants.

The envelope inequalities used here hold up to unspecified universal
constants.  This module measures stand-in constants empirically by exhaustive
enumeration sweeps and stores the extremes in a calibration file; the values
are always labeled as measured, never claimed to be the universal ones.
"""

from __future__ import annotations

import datetime
import json
import math
from importlib import resources
from typing import Dict, Optional

import numpy as np

from . import analysis

DEFAULT_DELTA = analysis.DEFAULT_DELTA
CALIBRATION_RESOURCE = "data/calibration.json"

CALIBRATION_GRID_N = tuple(range(4, 17, 2))
CALIBRATION_GRID_ALPHA = (0.01, 0.05, 0.1, 0.25, 0.5, 1.0)
_GRID_DESCRIPTION = (
    "n in {4,6,...,16}; eta*lam_max in {0.01,0.05,0.1,0.25,0.5,1.0}; "
    "balanced two-valued data shapes (equal-curvature and half-zero-curvature)"
)


def keyup_square_envelope(n: int, alpha_bar: float, delta: float = DEFAULT_DELTA,
                          c: float = 1.0) -> float:
    """c * log^2(8n/delta) * min{1/alpha_bar, n^3 alpha_bar^2}."""
    if alpha_bar <= 0:
        raise ValueError("alpha_bar must be positive")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    return c * math.log(8 * n / delta) ** 2 * min(1.0 / alpha_bar, n**3 * alpha_bar**2)


def rv_abs_envelope(n: int, alpha_bar: float, c1: float = 1.0) -> float:
    """Branchwise ceiling for E|Q|: 2 n a for n*a <= 1/2, else
    c1 * log(sqrt(2a) * 8 n^2) / sqrt(a)."""
    if alpha_bar <= 0:
        raise ValueError("alpha_bar must be positive")
    if n * alpha_bar <= 0.5:
        return 2.0 * n * alpha_bar
    return c1 * math.log(math.sqrt(2.0 * alpha_bar) * 8.0 * n**2) / math.sqrt(alpha_bar)


def rv_sq_envelope(n: int, alpha_bar: float, c2: float = 1.0, c3: float = 1.0) -> float:
    """Branchwise ceiling for E[Q^2]: c2 log^2(8/(n a)) n^3 a^2 for n*a <= 1/2,
    else c3 log^2(8 n^2 a^2) / a."""
    if alpha_bar <= 0:
        raise ValueError("alpha_bar must be positive")
    if n * alpha_bar <= 0.5:
        return c2 * math.log(8.0 / (n * alpha_bar)) ** 2 * n**3 * alpha_bar**2
    return c3 * math.log(8.0 * n**2 * alpha_bar**2) ** 2 / alpha_bar


def _shape_data(shape: str, n: int, alpha: float):
    """Two enumerable (alpha_i, beta_i) layouts from the construction family.

    "equal": every alpha_i = alpha, balanced +-1 betas (the 2-d construction's
    steep coordinate).  "half-zero": alpha on one type and 0 on the other,
    balanced +-1 betas (the 3-d construction's switching coordinate).
    """
    half = n // 2
    if shape == "equal":
        alphas = np.full(n, alpha)
    elif shape == "half-zero":
        alphas = np.array([alpha] * half + [0.0] * half)
    else:
        raise ValueError(f"unknown shape {shape!r}")
    betas = np.array([-1.0] * half + [1.0] * half)
    return alphas, betas


def _pattern_q_stats(alphas, betas):
    """Exact (E|Q|, E[Q^2]) for two-valued balanced data via enumeration."""
    tv = analysis._two_valued_rows(np.asarray(alphas, float), np.asarray(betas, float))
    uniq, counts = tv
    n = len(alphas)
    _, q = analysis._tail_product_stats(
        uniq[:, 0], uniq[:, 1], 1.0, analysis._pattern_matrix(n)
    )
    return float(np.mean(np.abs(q))), float(np.mean(q * q))


def measure_constants(delta: float = DEFAULT_DELTA) -> Dict[str, dict]:
    """Sweep the enumeration grid and record every envelope ratio extreme."""
    beta_lo, beta_hi = math.inf, -math.inf
    keyup_hi = -math.inf
    c1_hi = c2_hi = c3_hi = -math.inf
    for n in CALIBRATION_GRID_N:
        for alpha in CALIBRATION_GRID_ALPHA:
            ratio = analysis.beta_exact(n, alpha, 1.0) / analysis.beta_lower_envelope(
                n, alpha, 1.0
            )
            beta_lo = min(beta_lo, ratio)
            beta_hi = max(beta_hi, ratio)
            for shape in ("equal", "half-zero"):
                alphas, betas = _shape_data(shape, n, alpha)
                abar = float(np.mean(alphas))
                e_abs, e_sq = _pattern_q_stats(alphas, betas)
                keyup_hi = max(keyup_hi, e_sq / keyup_square_envelope(n, abar, delta))
                if n * abar <= 0.5:
                    c2_hi = max(c2_hi, e_sq / rv_sq_envelope(n, abar))
                    c1_hi = max(c1_hi, e_abs / rv_abs_envelope(n, abar))
                else:
                    c3_hi = max(c3_hi, e_sq / rv_sq_envelope(n, abar))
                    c1_hi = max(c1_hi, e_abs / rv_abs_envelope(n, abar))
    stamp = datetime.date.today().isoformat()

    def entry(value: float) -> dict:
        return {
            "value": value,
            "grid_description": _GRID_DESCRIPTION,
            "computed_at": stamp,
        }

    return {
        "beta_envelope_c_lo": entry(beta_lo),
        "beta_envelope_c_hi": entry(beta_hi),
        "keyup_sq_c": entry(keyup_hi),
        "rv_abs_c1": entry(c1_hi),
        "rv_sq_c2": entry(c2_hi),
        "rv_sq_c3": entry(c3_hi),
    }


def write_calibration(path, delta: float = DEFAULT_DELTA) -> Dict[str, dict]:
    doc = measure_constants(delta)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return doc


def load_calibration(path: Optional[str] = None) -> Dict[str, dict]:
    """Load a calibration file; defaults to the one shipped with the package."""
    if path is not None:
        with open(path) as fh:
            return json.load(fh)
    ref = resources.files(__package__).joinpath(CALIBRATION_RESOURCE)
    return json.loads(ref.read_text())


def calibrated_constant(name: str, path: Optional[str] = None) -> float:
    doc = load_calibration(path)
    if name not in doc:
        raise KeyError(f"no calibrated constant named {name!r}")
    return float(doc[name]["value"])


def _main() -> int:
    import sys

    target = sys.argv[1] if len(sys.argv) > 1 else None
    if target is None:
        import pathlib

        target = pathlib.Path(__file__).parent / CALIBRATION_RESOURCE
    doc = write_calibration(target)
    for name, rec in sorted(doc.items()):
        print(f"{name} = {rec['value']:.6g}")
    print(f"wrote {target}")
    return 0


if __name__ == "__main__":
    raise SystemExit(_main())
