"""Sweep harness: loss-versus-epochs curves for all three sampling schemes.

A sweep runs every (scheme, k, seed) cell of a plan with the step size rule
applied per k, records final losses, and aggregates per-(scheme, k) mean and
standard deviation of log10 loss (error bars are one standard deviation, not
a standard error).  Outputs are byte-deterministic for a fixed plan: per-run
seeds derive from the plan's seed_base through numpy SeedSequence spawn keys
(scheme_code, k, seed_index), with the scheme code dropped when couple_rng
asks for shared randomness across schemes.
"""

from __future__ import annotations

import json
import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, asdict
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import bounds, engine, model

LOG10_FLOOR = 1e-300
SCHEME_ORDER = ("wr", "ss", "rr")
RECORDS_HEADER = "scheme,k,seed,final_loss,log10_loss"
SUMMARIES_HEADER = "scheme,k,mean_log10_loss,std_log10_loss,n_seeds"

SCHEME_COLORS = {"wr": "#1f77b4", "ss": "#d62728", "rr": "#2ca02c"}
SCHEME_LABELS = {
    "wr": "with-replacement",
    "ss": "single shuffling",
    "rr": "random reshuffling",
}


@dataclass(frozen=True)
class SweepPlan:
    construction: str  # "ss" or "rr"
    n: int
    G: float
    lam: float
    lam_max: float
    k_values: tuple
    seeds: int
    x0_preset: str = "fig1"
    eta_rule: object = "recommended"  # "recommended" or a fixed float
    couple_rng: bool = False
    seed_base: int = 0

    def __post_init__(self):
        object.__setattr__(self, "k_values", tuple(int(k) for k in self.k_values))
        if self.construction not in ("ss", "rr"):
            raise ValueError("construction must be 'ss' or 'rr'")
        if not self.k_values or list(self.k_values) != sorted(set(self.k_values)):
            raise ValueError("k_values must be nonempty, ascending and distinct")
        if self.seeds < 1:
            raise ValueError("seeds must be >= 1")
        if self.eta_rule != "recommended":
            eta = float(self.eta_rule)
            if eta < 0:
                raise ValueError("fixed eta must be nonnegative")
            object.__setattr__(self, "eta_rule", eta)

    def eta_for(self, k: int) -> float:
        if self.eta_rule == "recommended":
            return engine.recommended_eta(self.n, k, self.lam)
        return float(self.eta_rule)

    def to_json_dict(self) -> dict:
        doc = asdict(self)
        doc["lambda"] = doc.pop("lam")
        doc["lambda_max"] = doc.pop("lam_max")
        doc["k_values"] = list(self.k_values)
        return doc


def plan_from_json_dict(doc: dict) -> SweepPlan:
    doc = dict(doc)
    doc["lam"] = doc.pop("lambda")
    doc["lam_max"] = doc.pop("lambda_max")
    return SweepPlan(**doc)


def desk_plan(construction: str, seed_base: int = 0) -> SweepPlan:
    """Laptop-scale default: crossover epoch lam_max/lam = 50 sits inside the
    k grid, so both regimes of the rate curves are visible cheaply."""
    return SweepPlan(
        construction=construction,
        n=100,
        G=1.0,
        lam=1.0,
        lam_max=50.0,
        k_values=(10, 25, 50, 75, 100, 150, 200, 400),
        seeds=100,
        x0_preset="fig1",
        seed_base=seed_base,
    )


def paper_plan(construction: str, seed_base: int = 0) -> SweepPlan:
    """Full-scale experiment settings (n=500, condition number 200, k up to
    2000, 100 instantiations); expensive, run deliberately."""
    return SweepPlan(
        construction=construction,
        n=500,
        G=1.0,
        lam=1.0,
        lam_max=200.0,
        k_values=(40, 60, 100, 150, 200, 300, 400, 600, 800, 1000, 1400, 2000),
        seeds=100,
        x0_preset="fig1",
        seed_base=seed_base,
    )


def _rr_fig1_problem(n: int, G: float, lam: float, lam_max: float) -> model.Problem:
    """The 3-d construction restricted to its first and third coordinates.

    The dropped middle coordinate duplicates the 2-d construction's steep
    coordinate, so the reduced problem keeps the reshuffling-specific
    dynamics while staying visually distinct from the 2-d experiment.
    """
    comps = []
    for i in range(n):
        if i < n // 2:
            comps.append(model.Component(curvatures=(lam, lam_max), linear=(0.0, -G / 2.0)))
        else:
            comps.append(model.Component(curvatures=(lam, 0.0), linear=(0.0, G / 2.0)))
    return model.Problem(
        components=tuple(comps), dim=2, lam=lam, lam_max=lam_max,
        smooth_l=lam_max, grad_bound=G,
    )


def build_instance(construction: str, x0_preset: str, n: int, G: float,
                   lam: float, lam_max: float) -> Tuple[model.Problem, np.ndarray]:
    """Problem plus initialization for a (construction, preset) pair.

    The "rr" construction with the "fig1" preset resolves to its reduced 2-d
    variant, matching the experiment's use of only the first and third
    coordinates.
    """
    if construction == "ss":
        p = model.build_ss_construction(n, G, lam, lam_max)
        return p, model.preset_x0("ss", x0_preset, G, lam, lam_max)
    if construction == "rr":
        if x0_preset == "fig1":
            return _rr_fig1_problem(n, G, lam, lam_max), model.preset_x0(
                "rr", "fig1", G, lam, lam_max
            )
        p = model.build_rr_construction(n, G, lam, lam_max)
        return p, model.preset_x0("rr", x0_preset, G, lam, lam_max)
    raise ValueError("construction must be 'ss' or 'rr'")


def resolve_problem(plan: SweepPlan) -> Tuple[model.Problem, np.ndarray]:
    """Build the plan's problem instance and initialization point."""
    return build_instance(plan.construction, plan.x0_preset, plan.n, plan.G,
                          plan.lam, plan.lam_max)


@dataclass(frozen=True)
class SweepRecord:
    scheme: str
    k: int
    seed: int
    final_loss: float
    log10_loss: float


@dataclass(frozen=True)
class SweepSummary:
    scheme: str
    k: int
    mean_log10_loss: float
    std_log10_loss: float
    n_seeds: int


def run_seed_for(plan: SweepPlan, scheme_tag: str, k: int, seed_index: int) -> int:
    """First uint64 word of SeedSequence(seed_base, spawn_key=...); the spawn
    key is (scheme_code, k, seed_index), or (k, seed_index) when coupled."""
    if plan.couple_rng:
        key: tuple = (k, seed_index)
    else:
        key = (SCHEME_ORDER.index(scheme_tag), k, seed_index)
    ss = np.random.SeedSequence(entropy=plan.seed_base, spawn_key=key)
    return int(ss.generate_state(1, np.uint64)[0])


def _clamped_log10(loss: float) -> float:
    return math.log10(max(loss, LOG10_FLOOR))


def _run_cell(plan: SweepPlan, scheme_tag: str, k: int) -> List[SweepRecord]:
    p, x0 = resolve_problem(plan)
    eta = plan.eta_for(k)
    records = []
    for s in range(plan.seeds):
        cfg = engine.RunConfig(
            scheme=engine.Scheme.from_tag(scheme_tag), eta=eta, epochs=k, x0=x0,
            seed=run_seed_for(plan, scheme_tag, k, s),
        )
        loss = engine.run_sgd_closed_form(p, cfg).final_loss
        records.append(
            SweepRecord(scheme=scheme_tag, k=k, seed=s, final_loss=loss,
                        log10_loss=_clamped_log10(loss))
        )
    return records


def summarize(records: Sequence[SweepRecord]) -> List[SweepSummary]:
    """Per-(scheme, k) mean and sample standard deviation of log10 loss."""
    groups: Dict[Tuple[str, int], List[float]] = {}
    for r in records:
        groups.setdefault((r.scheme, r.k), []).append(r.log10_loss)
    out = []
    for scheme in SCHEME_ORDER:
        for (s, k) in sorted((g for g in groups if g[0] == scheme), key=lambda g: g[1]):
            vals = np.array(groups[(s, k)])
            std = float(np.std(vals, ddof=1)) if vals.size > 1 else 0.0
            out.append(
                SweepSummary(scheme=s, k=k, mean_log10_loss=float(np.mean(vals)),
                             std_log10_loss=std, n_seeds=int(vals.size))
            )
    return out


def run_sweep(plan: SweepPlan, jobs: Optional[int] = None
              ) -> Tuple[List[SweepRecord], List[SweepSummary]]:
    """All three schemes over the plan's grid; deterministic given the plan.

    Cells parallelize over (scheme, k); aggregation reads results back in
    (scheme, k, seed) order, so worker scheduling never changes the output.
    """
    p, x0 = resolve_problem(plan)
    report = model.validate_assumptions(p, x0, max(plan.k_values))
    if not report.all_passed:
        failed = ", ".join(c.name for c in report.failed())
        warnings.warn(f"plan violates assumption clauses: {failed}", RuntimeWarning)
    tasks = [(scheme, k) for scheme in SCHEME_ORDER for k in plan.k_values]
    if jobs is None:
        jobs = os.cpu_count() or 1
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = {t: pool.submit(_run_cell, plan, *t) for t in tasks}
            cells = {t: futures[t].result() for t in tasks}
    else:
        cells = {t: _run_cell(plan, *t) for t in tasks}
    records: List[SweepRecord] = []
    for t in tasks:
        records.extend(cells[t])
    return records, summarize(records)


def fit_loglog_slope(summaries: Sequence[SweepSummary]) -> Tuple[float, float, float]:
    """OLS of mean_log10_loss against log10 k: (slope, intercept, r^2)."""
    if len(summaries) < 3:
        raise ValueError("need at least 3 points to fit a slope")
    x = np.array([math.log10(s.k) for s in summaries])
    y = np.array([s.mean_log10_loss for s in summaries])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_res = float(np.sum(resid**2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        r2 = 1.0 if ss_res <= 1e-30 else 0.0
    else:
        r2 = 1.0 - ss_res / ss_tot
    return float(slope), float(intercept), r2


def fit_bound_constant(summaries: Sequence[SweepSummary], spec: bounds.BoundSpec,
                       plan: SweepPlan) -> float:
    """Least-squares fit (on log10 values) of a rate curve's constant to the
    summaries of one scheme; the fit is reported, never claimed universal."""
    logs = []
    for s in summaries:
        shape = spec.evaluate(plan.n, s.k, plan.G, plan.lam, plan.lam_max)
        logs.append(s.mean_log10_loss - math.log10(shape))
    return 10.0 ** float(np.mean(logs))


# ---------------------------------------------------------------------------
# CSV emission


def _plan_meta_lines(plan: Optional[SweepPlan]) -> List[str]:
    lines = []
    if plan is not None:
        lines.append("# plan=" + json.dumps(plan.to_json_dict(), sort_keys=True))
    lines.append(f"# log10_floor={LOG10_FLOOR!r}")
    lines.append(f"# rng_algorithm_id={engine.RNG_ALGORITHM_ID}")
    return lines


def emit_records_csv(records: Sequence[SweepRecord], path,
                     plan: Optional[SweepPlan] = None) -> None:
    lines = _plan_meta_lines(plan)
    clamped = sum(1 for r in records if r.final_loss < LOG10_FLOOR)
    lines.append(f"# clamped_rows={clamped}")
    lines.append(RECORDS_HEADER)
    for r in records:
        lines.append(f"{r.scheme},{r.k},{r.seed},{r.final_loss!r},{r.log10_loss!r}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def emit_summaries_csv(summaries: Sequence[SweepSummary], path,
                       plan: Optional[SweepPlan] = None) -> None:
    lines = _plan_meta_lines(plan)
    lines.append(SUMMARIES_HEADER)
    for s in summaries:
        lines.append(
            f"{s.scheme},{s.k},{s.mean_log10_loss!r},{s.std_log10_loss!r},{s.n_seeds}"
        )
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _data_rows(path) -> List[List[str]]:
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            rows.append(line.split(","))
    return rows


def read_records_csv(path) -> List[SweepRecord]:
    rows = _data_rows(path)
    if rows[0] != RECORDS_HEADER.split(","):
        raise ValueError(f"unexpected records header in {path}")
    return [
        SweepRecord(scheme=r[0], k=int(r[1]), seed=int(r[2]),
                    final_loss=float(r[3]), log10_loss=float(r[4]))
        for r in rows[1:]
    ]


def read_summaries_csv(path) -> List[SweepSummary]:
    rows = _data_rows(path)
    if rows[0] != SUMMARIES_HEADER.split(","):
        raise ValueError(f"unexpected summaries header in {path}")
    return [
        SweepSummary(scheme=r[0], k=int(r[1]), mean_log10_loss=float(r[2]),
                     std_log10_loss=float(r[3]), n_seeds=int(r[4]))
        for r in rows[1:]
    ]


# ---------------------------------------------------------------------------
# SVG emission


def _svg_marker(scheme: str, x: float, y: float, color: str) -> str:
    if scheme == "wr":  # circle
        return f'<circle cx="{x:.2f}" cy="{y:.2f}" r="3.5" fill="{color}"/>'
    if scheme == "ss":  # plus
        return (
            f'<path d="M {x - 4:.2f} {y:.2f} H {x + 4:.2f} M {x:.2f} {y - 4:.2f} '
            f'V {y + 4:.2f}" stroke="{color}" stroke-width="1.8"/>'
        )
    pts = f"{x:.2f},{y - 4.2:.2f} {x - 3.8:.2f},{y + 3.2:.2f} {x + 3.8:.2f},{y + 3.2:.2f}"
    return f'<polygon points="{pts}" fill="{color}"/>'


def emit_svg(summaries: Sequence[SweepSummary], path,
             bound_curves: Optional[Sequence[Tuple[str, Sequence[Tuple[int, float]]]]] = None,
             title: str = "") -> None:
    """Static plot: one polyline per scheme on log10(k) vs mean log10 loss,
    error bars of one standard deviation, optional dashed rate overlays."""
    width, height = 760, 500
    left, right, top, bottom = 72, 210, 46, 58
    inner_w, inner_h = width - left - right, height - top - bottom

    ks = sorted({s.k for s in summaries})
    if not ks:
        raise ValueError("no summaries to plot")
    xs_all = [math.log10(k) for k in ks]
    x_lo, x_hi = min(xs_all), max(xs_all)
    if x_hi == x_lo:
        x_lo, x_hi = x_lo - 0.5, x_hi + 0.5
    y_vals = [s.mean_log10_loss - s.std_log10_loss for s in summaries]
    y_vals += [s.mean_log10_loss + s.std_log10_loss for s in summaries]
    if bound_curves:
        for _, pts in bound_curves:
            y_vals += [math.log10(max(v, LOG10_FLOOR)) for _, v in pts]
    y_lo, y_hi = min(y_vals), max(y_vals)
    pad = 0.05 * (y_hi - y_lo or 1.0)
    y_lo, y_hi = y_lo - pad, y_hi + pad

    def sx(k: float) -> float:
        return left + (math.log10(k) - x_lo) / (x_hi - x_lo) * inner_w

    def sy(v: float) -> float:
        return top + (y_hi - v) / (y_hi - y_lo) * inner_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<rect x="{left}" y="{top}" width="{inner_w}" height="{inner_h}" '
        'fill="none" stroke="#444"/>',
    ]
    if title:
        parts.append(
            f'<text x="{left + inner_w / 2:.2f}" y="24" text-anchor="middle" '
            f'font-size="14">{title}</text>'
        )
    for k in ks:
        x = sx(k)
        parts.append(
            f'<line x1="{x:.2f}" y1="{top + inner_h}" x2="{x:.2f}" '
            f'y2="{top + inner_h + 5}" stroke="#444"/>'
        )
        parts.append(
            f'<text x="{x:.2f}" y="{top + inner_h + 18}" text-anchor="middle">{k}</text>'
        )
    for i in range(7):
        v = y_lo + i * (y_hi - y_lo) / 6
        y = sy(v)
        parts.append(f'<line x1="{left - 5}" y1="{y:.2f}" x2="{left}" y2="{y:.2f}" stroke="#444"/>')
        parts.append(
            f'<text x="{left - 8}" y="{y + 4:.2f}" text-anchor="end">{v:.2f}</text>'
        )
    parts.append(
        f'<text x="{left + inner_w / 2:.2f}" y="{height - 16}" text-anchor="middle">k</text>'
    )
    parts.append(
        f'<text x="20" y="{top + inner_h / 2:.2f}" text-anchor="middle" '
        f'transform="rotate(-90 20 {top + inner_h / 2:.2f})">log10 F(x_k)</text>'
    )

    legend_y = top + 12
    for scheme in SCHEME_ORDER:
        pts = sorted((s for s in summaries if s.scheme == scheme), key=lambda s: s.k)
        if not pts:
            continue
        color = SCHEME_COLORS[scheme]
        coords = " ".join(f"{sx(s.k):.2f},{sy(s.mean_log10_loss):.2f}" for s in pts)
        parts.append(
            f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="1.6"/>'
        )
        for s in pts:
            x = sx(s.k)
            if s.std_log10_loss > 0:
                lo, hi = sy(s.mean_log10_loss - s.std_log10_loss), sy(
                    s.mean_log10_loss + s.std_log10_loss
                )
                parts.append(
                    f'<line x1="{x:.2f}" y1="{lo:.2f}" x2="{x:.2f}" y2="{hi:.2f}" '
                    f'stroke="{color}" stroke-width="1"/>'
                )
                for yy in (lo, hi):
                    parts.append(
                        f'<line x1="{x - 3:.2f}" y1="{yy:.2f}" x2="{x + 3:.2f}" '
                        f'y2="{yy:.2f}" stroke="{color}" stroke-width="1"/>'
                    )
            parts.append(_svg_marker(scheme, x, sy(s.mean_log10_loss), color))
        lx = left + inner_w + 14
        parts.append(
            f'<line x1="{lx}" y1="{legend_y - 4}" x2="{lx + 22}" y2="{legend_y - 4}" '
            f'stroke="{color}" stroke-width="1.6"/>'
        )
        parts.append(_svg_marker(scheme, lx + 11, legend_y - 4, color))
        parts.append(f'<text x="{lx + 28}" y="{legend_y}">{SCHEME_LABELS[scheme]}</text>')
        legend_y += 18
    if bound_curves:
        for label, pts in bound_curves:
            coords = " ".join(
                f"{sx(k):.2f},{sy(math.log10(max(v, LOG10_FLOOR))):.2f}" for k, v in pts
            )
            parts.append(
                f'<polyline points="{coords}" fill="none" stroke="#777" '
                'stroke-width="1.2" stroke-dasharray="5,3"/>'
            )
            lx = left + inner_w + 14
            parts.append(
                f'<line x1="{lx}" y1="{legend_y - 4}" x2="{lx + 22}" y2="{legend_y - 4}" '
                'stroke="#777" stroke-width="1.2" stroke-dasharray="5,3"/>'
            )
            parts.append(f'<text x="{lx + 28}" y="{legend_y}">{label}</text>')
            legend_y += 18
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")
