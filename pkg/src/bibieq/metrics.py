"""Aggregation of sweep results into logical-error-rate metrics and fits.

Block error rates carry Wilson intervals; per-round rates follow from
block rates via 1-(1-p)^(1/d).  Curve-level metrics: the engine gap
rho(e) (approx/exact ratio), its log-log elasticity s(e) by central
finite differences, the geometric-mean separation Gamma between two
curves, and the pseudo-threshold where p_L(e) crosses the identity line
(log-log interpolation between bracketing grid points).

Subthreshold scaling fits are weighted least squares on
log p_L = log A(e) + alpha * d * log(e/e_hat): per fixed e a WLS of
log p_L against d, and a pooled fit of log p_L against the single
regressor d*log(e/e_hat) over all points, both weighted by effective
shot counts.  Points with zero errors are excluded from log fits and
recorded as censored.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

Z95 = 1.959963984540054


@dataclass
class SweepRecord:
    code: str
    schedule: str
    engine: str
    e: float
    p: float
    q: float
    instances: int
    shots: int
    errors: int
    discards: int
    per_observable_errors: Tuple[int, ...] = ()
    seed: int = 0
    rounds: int = 0

    def __post_init__(self):
        if self.discards > self.shots:
            raise ValueError("discards exceed shots")
        if self.errors > self.shots - self.discards:
            raise ValueError("errors exceed effective shots")

    @property
    def effective_shots(self) -> int:
        return self.shots - self.discards


CSV_COLUMNS = ["code", "schedule", "engine", "e", "p", "q", "instances",
               "shots", "errors", "discards", "per_observable_errors",
               "seed", "rounds"]


def records_to_csv(records: Sequence[SweepRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in sorted(records, key=lambda r: (r.code, r.schedule, r.engine, r.e, r.seed)):
        writer.writerow([
            r.code, r.schedule, r.engine, repr(r.e), repr(r.p), repr(r.q),
            r.instances, r.shots, r.errors, r.discards,
            "|".join(map(str, r.per_observable_errors)), r.seed, r.rounds,
        ])
    return buf.getvalue()


def records_from_csv(text: str) -> List[SweepRecord]:
    out = []
    reader = csv.DictReader(io.StringIO(text))
    for row in reader:
        per_obs = tuple(int(x) for x in row["per_observable_errors"].split("|") if x)
        out.append(SweepRecord(
            code=row["code"], schedule=row["schedule"], engine=row["engine"],
            e=float(row["e"]), p=float(row["p"]), q=float(row["q"]),
            instances=int(row["instances"]), shots=int(row["shots"]),
            errors=int(row["errors"]), discards=int(row["discards"]),
            per_observable_errors=per_obs, seed=int(row["seed"]),
            rounds=int(row.get("rounds", 0) or 0),
        ))
    return out


def wilson_interval(successes: int, trials: int, z: float = Z95) -> Tuple[float, float]:
    if trials <= 0:
        raise ValueError("trials must be positive")
    phat = successes / trials
    denom = 1.0 + z * z / trials
    center = (phat + z * z / (2 * trials)) / denom
    half = z * math.sqrt(phat * (1 - phat) / trials + z * z / (4 * trials * trials)) / denom
    lo = 0.0 if successes == 0 else max(0.0, center - half)
    hi = 1.0 if successes == trials else min(1.0, center + half)
    return lo, hi


def block_ler(rec: SweepRecord) -> Tuple[float, Tuple[float, float]]:
    """Block error rate E/N with a Wilson 95% interval."""
    n = rec.effective_shots
    if n <= 0:
        raise ValueError("no effective shots (all discarded)")
    return rec.errors / n, wilson_interval(rec.errors, n)


def per_round_ler(p_block: float, rounds: int) -> float:
    """Convert a block rate over `rounds` cycles to a per-round rate."""
    if not (0.0 <= p_block <= 1.0):
        raise ValueError("p_block must be in [0, 1]")
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    if p_block == 0.0 or rounds == 1:
        return p_block
    return -math.expm1(math.log1p(-p_block) / rounds)


def block_from_per_round(p_round: float, rounds: int) -> float:
    return -math.expm1(rounds * math.log1p(-p_round))


def engine_gap(e_grid: Sequence[float], pl_approx: Sequence[float],
               pl_exact: Sequence[float]) -> Tuple[List[float], List[float]]:
    """Pointwise ratio approx/exact; zero-denominator points are dropped."""
    if len(pl_approx) != len(pl_exact) or len(e_grid) != len(pl_exact):
        raise ValueError("curves must share one grid")
    es, rho = [], []
    for e, pa, px in zip(e_grid, pl_approx, pl_exact):
        if px <= 0.0:
            continue
        es.append(e)
        rho.append(pa / px)
    return es, rho


def gap_growth(e_grid: Sequence[float], rho: Sequence[float]) -> List[float]:
    """Log-log derivative of rho(e): central differences, one-sided at ends."""
    n = len(rho)
    if n < 2:
        raise ValueError("need at least two grid points")
    if any(v <= 0 for v in rho) or any(e <= 0 for e in e_grid):
        raise ValueError("gap growth requires positive rho and e")
    lx = [math.log(e) for e in e_grid]
    ly = [math.log(v) for v in rho]
    out = []
    for i in range(n):
        if i == 0:
            out.append((ly[1] - ly[0]) / (lx[1] - lx[0]))
        elif i == n - 1:
            out.append((ly[-1] - ly[-2]) / (lx[-1] - lx[-2]))
        else:
            out.append((ly[i + 1] - ly[i - 1]) / (lx[i + 1] - lx[i - 1]))
    return out


def gmean_separation(pl_a: Sequence[float], pl_b: Sequence[float]) -> float:
    """Geometric mean of the pointwise ratio pl_a/pl_b over a shared grid."""
    if len(pl_a) != len(pl_b) or not pl_a:
        raise ValueError("curves must share one nonempty grid")
    if any(v <= 0 for v in pl_a) or any(v <= 0 for v in pl_b):
        raise ValueError("gmean separation requires positive rates")
    return math.exp(sum(math.log(a / b) for a, b in zip(pl_a, pl_b)) / len(pl_a))


def pseudo_threshold(e_grid: Sequence[float], pl: Sequence[float]) -> float:
    """Crossing of p_L(e) with the identity line, log-log interpolated."""
    if len(e_grid) != len(pl) or len(pl) < 2:
        raise ValueError("need a curve on a grid")
    g = []
    for e, v in zip(e_grid, pl):
        if e <= 0 or v <= 0:
            raise ValueError("pseudo-threshold needs positive e and p_L")
        g.append(math.log(v) - math.log(e))
    for i in range(len(g) - 1):
        if g[i] == 0.0:
            return e_grid[i]
        if g[i] * g[i + 1] < 0.0:
            x0, x1 = math.log(e_grid[i]), math.log(e_grid[i + 1])
            t = g[i] / (g[i] - g[i + 1])
            return math.exp(x0 + t * (x1 - x0))
    if g[-1] == 0.0:
        return e_grid[-1]
    raise ValueError("identity crossing not bracketed by the grid")


# ---------------------------------------------------------------------------
# subthreshold scaling fits
# ---------------------------------------------------------------------------

@dataclass
class FitResult:
    alpha_per_e: Dict[float, Tuple[float, float]]   # e -> (alpha, stderr)
    a_per_e: Dict[float, float]                     # e -> baseline A(e)
    pooled_alpha: Tuple[float, float]               # (alpha, stderr)
    e_hat: float
    points_used: List[Tuple[float, int]]            # (e, d) pairs in the fits
    censored: List[Tuple[float, int]]               # excluded zero-error points


def _wls(x: np.ndarray, y: np.ndarray, w: np.ndarray) -> Tuple[float, float, float]:
    """Weighted least squares of y = b0 + b1 x; returns (b0, b1, se_b1)."""
    sw = np.sqrt(w)
    design = np.column_stack([np.ones_like(x), x]) * sw[:, None]
    target = y * sw
    coef, *_ = np.linalg.lstsq(design, target, rcond=None)
    resid = target - design @ coef
    dof = len(x) - 2
    if dof > 0:
        sigma2 = float(resid @ resid) / dof
        cov = sigma2 * np.linalg.inv(design.T @ design)
        se = math.sqrt(max(cov[1, 1], 0.0))
    else:
        se = float("nan")
    return float(coef[0]), float(coef[1]), se


def wls_alpha_fit(points: Sequence[Tuple[float, int, float, float]],
                  e_hat: float) -> FitResult:
    """Fit the distance-scaling exponent from (e, d, p_L, N_eff) points.

    Only points with e < e_hat and p_L > 0 enter; each fixed-e fit needs
    at least two distinct distances.  Weights are the effective shot
    counts.
    """
    if e_hat <= 0:
        raise ValueError("e_hat must be positive")
    used: List[Tuple[float, int, float, float]] = []
    censored: List[Tuple[float, int]] = []
    for e, d, pl, n_eff in points:
        if e >= e_hat:
            continue
        if pl <= 0.0:
            censored.append((e, d))
            continue
        if n_eff <= 0:
            raise ValueError("weights must be positive")
        used.append((e, d, pl, n_eff))

    by_e: Dict[float, List[Tuple[int, float, float]]] = {}
    for e, d, pl, n_eff in used:
        by_e.setdefault(e, []).append((d, pl, n_eff))

    alpha_per_e: Dict[float, Tuple[float, float]] = {}
    a_per_e: Dict[float, float] = {}
    for e, pts in sorted(by_e.items()):
        if len({d for d, _, _ in pts}) < 2:
            continue
        x = np.array([d for d, _, _ in pts], dtype=float)
        y = np.array([math.log(pl) for _, pl, _ in pts])
        w = np.array([n for _, _, n in pts], dtype=float)
        b0, slope, se_slope = _wls(x, y, w)
        scale = math.log(e / e_hat)
        alpha_per_e[e] = (slope / scale, abs(se_slope / scale) if not math.isnan(se_slope) else float("nan"))
        a_per_e[e] = math.exp(b0)

    if len(used) < 2:
        raise ValueError("not enough points for a pooled fit")
    x = np.array([d * math.log(e / e_hat) for e, d, _, _ in used])
    y = np.array([math.log(pl) for _, _, pl, _ in used])
    w = np.array([n for _, _, _, n in used], dtype=float)
    if np.allclose(x, x[0]):
        raise ValueError("degenerate design: all points share d*log(e/e_hat)")
    _, pooled, pooled_se = _wls(x, y, w)

    return FitResult(
        alpha_per_e=alpha_per_e,
        a_per_e=a_per_e,
        pooled_alpha=(pooled, pooled_se),
        e_hat=e_hat,
        points_used=[(e, d) for e, d, _, _ in used],
        censored=censored,
    )
