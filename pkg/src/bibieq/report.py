"""Tables and SVG plots from persisted sweep records.

Produces, per schedule, the per-round LER vs erasure-rate plot (solid
lines for the exact engine, dashed for the approximate one), the
distance-scaling panels (schedule x engine) with weighted fits, and a
summary of pseudo-thresholds, pooled exponents, median engine gaps and
distance separations.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .bbcode import get_code
from .metrics import (
    FitResult, SweepRecord, block_ler, engine_gap, gmean_separation,
    per_round_ler, pseudo_threshold, records_from_csv, wls_alpha_fit,
)

_CODE_COLORS = {"72": "tab:blue", "108": "tab:orange", "144": "tab:green"}


@dataclass
class CurvePoint:
    e: float
    pl: float
    lo: float
    hi: float
    n_eff: int
    rounds: int


def per_round_curves(records: Sequence[SweepRecord]
                     ) -> Dict[Tuple[str, str, str], List[CurvePoint]]:
    """Per-round LER curves keyed by (code, schedule, engine)."""
    curves: Dict[Tuple[str, str, str], List[CurvePoint]] = {}
    for rec in records:
        if rec.effective_shots == 0:
            warnings.warn(f"record {rec.code}/{rec.schedule}/{rec.engine}@{rec.e} "
                          "has no effective shots; skipped")
            continue
        pb, (lo, hi) = block_ler(rec)
        d = rec.rounds or get_code(rec.code).claimed_d
        point = CurvePoint(
            e=rec.e,
            pl=per_round_ler(pb, d),
            lo=per_round_ler(lo, d),
            hi=per_round_ler(hi, d),
            n_eff=rec.effective_shots,
            rounds=d,
        )
        curves.setdefault((rec.code, rec.schedule, rec.engine), []).append(point)
    for pts in curves.values():
        pts.sort(key=lambda p: p.e)
    return curves


def summarize(records: Sequence[SweepRecord],
              e_hat_override: Optional[Dict[Tuple[str, str], float]] = None
              ) -> dict:
    """Pseudo-thresholds, engine gaps, separations and scaling exponents."""
    curves = per_round_curves(records)
    out: dict = {"pseudo_thresholds": {}, "median_engine_gap": {},
                 "gmean_separation": {}, "pooled_alpha": {}}

    schedules = sorted({k[1] for k in curves})
    codes = sorted({k[0] for k in curves}, key=lambda c: get_code(c).claimed_d)
    engines = sorted({k[2] for k in curves})

    for sched in schedules:
        for code in codes:
            for eng in engines:
                pts = curves.get((code, sched, eng))
                if not pts or len(pts) < 2:
                    continue
                try:
                    e_hat = pseudo_threshold([p.e for p in pts], [p.pl for p in pts])
                    out["pseudo_thresholds"][f"{code}/{sched}/{eng}"] = e_hat
                except ValueError:
                    pass

        # engine gap per code, medians pooled over codes
        gaps: List[float] = []
        for code in codes:
            pa = curves.get((code, sched, "approx"))
            px = curves.get((code, sched, "exact"))
            if not pa or not px:
                continue
            shared = sorted(set(p.e for p in pa) & set(p.e for p in px))
            amap = {p.e: p.pl for p in pa}
            xmap = {p.e: p.pl for p in px}
            es, rho = engine_gap(shared, [amap[e] for e in shared],
                                 [xmap[e] for e in shared])
            gaps.extend(rho)
        if gaps:
            gaps.sort()
            mid = len(gaps) // 2
            med = gaps[mid] if len(gaps) % 2 else 0.5 * (gaps[mid - 1] + gaps[mid])
            out["median_engine_gap"][sched] = med

        # distance separation for consecutive code pairs, per engine
        for eng in engines:
            for a, b in zip(codes, codes[1:]):
                ca = curves.get((a, sched, eng))
                cb = curves.get((b, sched, eng))
                if not ca or not cb:
                    continue
                shared = sorted(set(p.e for p in ca) & set(p.e for p in cb))
                if not shared:
                    continue
                am = {p.e: p.pl for p in ca}
                bm = {p.e: p.pl for p in cb}
                pos = [e for e in shared if am[e] > 0 and bm[e] > 0]
                if not pos:
                    continue
                gamma = gmean_separation([am[e] for e in pos], [bm[e] for e in pos])
                da, db = get_code(a).claimed_d, get_code(b).claimed_d
                out["gmean_separation"][f"{sched}/{eng}/d{da}->d{db}"] = gamma

        # pooled scaling exponent where at least two distances share e points
        for eng in engines:
            pts = []
            for code in codes:
                for p in curves.get((code, sched, eng), []):
                    pts.append((p.e, p.rounds, p.pl, p.n_eff))
            if len({d for _, d, _, _ in pts}) < 2:
                continue
            key = (sched, eng)
            e_hat = (e_hat_override or {}).get(key)
            if e_hat is None:
                e_hat = out["pseudo_thresholds"].get(f"{codes[0]}/{sched}/{eng}")
            if e_hat is None:
                continue
            try:
                fit = wls_alpha_fit(pts, e_hat)
            except ValueError:
                continue
            out["pooled_alpha"][f"{sched}/{eng}"] = {
                "alpha": fit.pooled_alpha[0],
                "stderr": fit.pooled_alpha[1],
                "e_hat": e_hat,
                "points": len(fit.points_used),
            }
    return out


def plot_ler_curves(records: Sequence[SweepRecord], out_dir: Path) -> List[Path]:
    """One log-log LER plot per schedule: solid exact, dashed approx."""
    curves = per_round_curves(records)
    schedules = sorted({k[1] for k in curves})
    written = []
    for sched in schedules:
        fig, ax = plt.subplots(figsize=(5.2, 4.0))
        e_all: List[float] = []
        for (code, s, eng), pts in sorted(curves.items()):
            if s != sched:
                continue
            style = "-" if eng == "exact" else "--"
            color = _CODE_COLORS.get(code)
            es = [p.e for p in pts]
            pls = [max(p.pl, 1e-12) for p in pts]
            yerr_lo = [max(p.pl - p.lo, 0.0) for p in pts]
            yerr_hi = [max(p.hi - p.pl, 0.0) for p in pts]
            ax.errorbar(es, pls, yerr=[yerr_lo, yerr_hi], fmt=style, marker="o",
                        ms=3, lw=1.2, color=color, capsize=2,
                        label=f"{get_code(code).name} {eng}")
            e_all.extend(es)
        if e_all:
            lo, hi = min(e_all), max(e_all)
            ax.plot([lo, hi], [lo, hi], color="gray", lw=0.8, ls=":",
                    label="identity")
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_xlabel("erasure rate e")
        ax.set_ylabel("per-round logical error rate")
        ax.set_title(f"schedule {sched}")
        ax.legend(fontsize=7)
        ax.grid(alpha=0.3, which="both")
        path = out_dir / f"ler_{sched}.svg"
        fig.savefig(path, bbox_inches="tight")
        plt.close(fig)
        written.append(path)
    return written


def plot_scaling_panels(records: Sequence[SweepRecord], out_dir: Path,
                        e_hat_override: Optional[Dict[Tuple[str, str], float]] = None
                        ) -> Optional[Path]:
    """Distance-scaling panels (schedule x engine) with WLS fit lines."""
    curves = per_round_curves(records)
    schedules = sorted({k[1] for k in curves})
    engines = sorted({k[2] for k in curves})
    if not schedules or not engines:
        return None
    summary = summarize(records, e_hat_override)
    fig, axes = plt.subplots(len(schedules), len(engines),
                             figsize=(4.0 * len(engines), 3.2 * len(schedules)),
                             squeeze=False)
    drew = False
    for i, sched in enumerate(schedules):
        for j, eng in enumerate(engines):
            ax = axes[i][j]
            pts = []
            for (code, s, en), cpts in curves.items():
                if s != sched or en != eng:
                    continue
                for p in cpts:
                    pts.append((p.e, p.rounds, p.pl, p.n_eff))
            es = sorted({e for e, _, _, _ in pts})
            cmap = plt.get_cmap("viridis")
            fit_info = summary["pooled_alpha"].get(f"{sched}/{eng}")
            for idx, e in enumerate(es):
                sel = sorted((d, pl) for ee, d, pl, _ in pts if ee == e)
                if not sel:
                    continue
                color = cmap(idx / max(len(es) - 1, 1))
                ax.semilogy([d for d, _ in sel], [max(pl, 1e-12) for _, pl in sel],
                            "o", color=color, ms=4, label=f"e={e:.2e}")
                if fit_info and len(sel) >= 2:
                    e_hat = fit_info["e_hat"]
                    alpha = fit_info["alpha"]
                    if e < e_hat:
                        dd = [min(d for d, _ in sel), max(d for d, _ in sel)]
                        # anchor the dashed guide at the first point
                        d0, pl0 = sel[0]
                        guide = [pl0 * (e / e_hat) ** (alpha * (d - d0)) for d in dd]
                        ax.semilogy(dd, guide, "--", color=color, lw=1.0)
                        drew = True
            title = f"{sched} / {eng}"
            if fit_info:
                title += (f"  (alpha={fit_info['alpha']:.2f}, "
                          f"e_hat={fit_info['e_hat']:.2e})")
            ax.set_title(title, fontsize=8)
            ax.set_xlabel("code distance d")
            ax.set_ylabel("per-round LER")
            ax.grid(alpha=0.3, which="both")
            if es:
                ax.legend(fontsize=6)
    fig.tight_layout()
    path = out_dir / "scaling_panels.svg"
    fig.savefig(path, bbox_inches="tight")
    plt.close(fig)
    return path


def write_report(results_dir: str, out_dir: Optional[str] = None,
                 e_hat_override: Optional[Dict[Tuple[str, str], float]] = None
                 ) -> dict:
    """Full report: plots + summary.json + summary table; returns summary."""
    results = Path(results_dir)
    csv_path = results / "records.csv"
    if not csv_path.exists():
        raise FileNotFoundError(f"no records.csv under {results}")
    records = records_from_csv(csv_path.read_text())
    if not records:
        raise ValueError("records.csv is empty")
    out = Path(out_dir) if out_dir else results
    out.mkdir(parents=True, exist_ok=True)

    plot_ler_curves(records, out)
    plot_scaling_panels(records, out, e_hat_override)
    summary = summarize(records, e_hat_override)
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True))

    lines = ["metric, key, value"]
    for section in ("pseudo_thresholds", "median_engine_gap",
                    "gmean_separation"):
        for key, val in sorted(summary[section].items()):
            lines.append(f"{section}, {key}, {val:.6g}")
    for key, val in sorted(summary["pooled_alpha"].items()):
        lines.append(f"pooled_alpha, {key}, {val['alpha']:.6g} "
                     f"(se {val['stderr']:.2g})")
    (out / "summary.csv").write_text("\n".join(lines) + "\n")
    return summary
