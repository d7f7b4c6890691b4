"""Conversion of erasure-annotated circuits into stabilizer circuits.

Both engines share the same evidence model per segment: given the flag
bit d_s of a segment with r entangling gates, the first-hit posterior

    a_i = e (1-e)^{i-1} (1-q) / Pr(d_s=1)      if d_s = 1
    a_i = e (1-e)^{i-1} q     / Pr(d_s=0)      if d_s = 0

for i = 1..r+1 gives the probability that the first erasure fell between
gates G_{i-1} and G_i (site F_i), with Pr(d_s=1) =
[1-(1-e)^{r+1}](1-q) + (1-e)^{r+1} q.

The exact engine rewrites the disjoint first-hit events as a chain of
independent Bernoulli draws (b_1 = a_1, b_i = a_i / prod_{j<i}(1-b_j)),
samples the first firing index k once per circuit instance, and inserts
two-qubit channels at the suffix sites k..r plus an unconditional
terminal one-qubit channel.  Channel rates are uniform over the 15 (resp.
3) nontrivial Paulis at

    rate = 1/2 - 1/2 (1-b_j)^(2^(1-2*suffix_len)),  suffix_len = r+2-j

so that at suffix_len 1 the formula reduces to the approximate engine's
rate.  The approximate engine factorizes instead: every interaction site
gets an independent one-qubit channel on the partner wire at rate
(1 - sqrt(1 - abar_j))/2 with abar_j the cumulative posterior, plus the
same terminal channel form on the segment qubit.  Three independent
mechanisms at that rate compose to a depolarizing error of total
probability 3*abar/4, i.e. (1-2*rate)^2 = 1-abar.

After insertion all erasure checks, conditional resets and site markers
are stripped and measurement records are renumbered.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import circuit as cir
from .circuit import (
    Circuit, ECCheck, ErasureSite, Measure, MeasFlip, Observable, Detector,
    PauliChannel1, PauliChannel2, Reset, uniform_1q_mechanisms,
    uniform_2q_mechanisms,
)
from .compiler import ErasureCircuit, ErasureLog, Segment

MODES = ("exact", "approx")


class ImpossibleEvidenceError(ValueError):
    """The observed flag value has probability zero under the noise law."""


class InconsistentPosteriorError(ValueError):
    """The Bernoulli chain cannot realize the posterior vector."""


def ec_outcome_prob(e: float, q: float, r: int) -> float:
    """Probability that a segment with r interactions raises its flag."""
    if not (0.0 <= e <= 1.0 and 0.0 <= q <= 1.0):
        raise ValueError("e, q must be in [0, 1]")
    if r < 0:
        raise ValueError("r must be >= 0")
    hit = _some_hit_prob(e, r)
    return hit * (1.0 - q) + (1.0 - hit) * q


def _some_hit_prob(e: float, r: int) -> float:
    # 1-(1-e)^(r+1) without cancellation for tiny e
    if e == 0.0:
        return 0.0
    if e == 1.0:
        return 1.0
    return -math.expm1((r + 1) * math.log1p(-e))


def _no_hit_prob(e: float, r: int) -> float:
    # (1-e)^(r+1), stable for tiny e
    if e == 0.0:
        return 1.0
    if e == 1.0:
        return 0.0
    return math.exp((r + 1) * math.log1p(-e))


@dataclass
class PosteriorVector:
    """First-hit posteriors for one segment given its flag."""

    a: List[float]
    d_s: int
    r: int
    residual: float

    def __post_init__(self):
        total = math.fsum(self.a) + self.residual
        if abs(total - 1.0) > 1e-9:
            raise AssertionError(f"posterior normalization off by {total - 1.0:.2e}")


def posteriors(d_s: int, e: float, q: float, r: int) -> PosteriorVector:
    """Bayes update of the first-hit location from the flag value."""
    denom = ec_outcome_prob(e, q, r)
    if d_s not in (0, 1):
        raise ValueError("d_s must be 0 or 1")
    if d_s == 0:
        denom = 1.0 - denom
    if denom <= 0.0:
        raise ImpossibleEvidenceError(
            f"flag value {d_s} has zero probability at e={e}, q={q}, r={r}"
        )
    flag_factor = (1.0 - q) if d_s == 1 else q
    residual_factor = q if d_s == 1 else (1.0 - q)
    a = [e * _pow_1me(e, i - 1) * flag_factor / denom for i in range(1, r + 2)]
    residual = _no_hit_prob(e, r) * residual_factor / denom
    return PosteriorVector(a=a, d_s=d_s, r=r, residual=residual)


def _pow_1me(e: float, k: int) -> float:
    if k == 0:
        return 1.0
    if e == 1.0:
        return 0.0
    return math.exp(k * math.log1p(-e))


@dataclass
class BernoulliChain:
    """Independent per-site firing probabilities realizing the posteriors."""

    b: List[float]

    def sample_first_hit(self, rng: np.random.Generator) -> int:
        """First firing index (1-based); len(b)+1 means no site fired."""
        for i, bi in enumerate(self.b):
            if bi > 0.0 and rng.random() < bi:
                return i + 1
        return len(self.b) + 1


def bernoulli_chain(pv: PosteriorVector) -> BernoulliChain:
    b: List[float] = []
    remaining = 1.0  # prod_{j<i} (1 - b_j) = 1 - sum_{j<i} a_j
    for i, ai in enumerate(pv.a):
        if ai == 0.0:
            bi = 0.0
        else:
            if remaining <= 0.0:
                raise InconsistentPosteriorError(
                    f"posterior mass saturated before site {i + 1}"
                )
            bi = ai / remaining
            if bi > 1.0:
                if bi > 1.0 + 1e-9:
                    raise InconsistentPosteriorError(
                        f"chain probability {bi} > 1 at site {i + 1}"
                    )
                bi = 1.0
        b.append(bi)
        remaining *= (1.0 - bi)
    return BernoulliChain(b=b)


def cumulative(pv: PosteriorVector) -> List[float]:
    """abar_j = Pr(erased before G_j | d_s), nondecreasing partial sums."""
    out = []
    acc = 0.0
    for ai in pv.a:
        acc += ai
        out.append(min(acc, 1.0))
    return out


def exact_mechanism_rate(b: float, suffix_len: int) -> float:
    """Per-mechanism rate for the exact engine's uniform channels."""
    if suffix_len < 1:
        raise ValueError("suffix_len must be >= 1")
    if not (0.0 <= b <= 1.0):
        raise ValueError("b must be in [0, 1]")
    return 0.5 - 0.5 * (1.0 - b) ** (2.0 ** (1 - 2 * suffix_len))


def approx_mechanism_rate(abar: float) -> float:
    """Per-mechanism rate such that three independent mechanisms compose to
    a depolarizing error of total probability 3*abar/4."""
    if not (0.0 <= abar <= 1.0):
        raise ValueError("abar must be in [0, 1]")
    return 0.5 * (1.0 - math.sqrt(1.0 - abar))


@dataclass
class SegmentConversion:
    qubit: int
    index: int
    r: int
    d_s: int
    first_hit: Optional[int]  # sampled chain index (exact engine only)
    channels: List[Tuple[int, int, float]]  # (site_id, n_qubits, per-mech rate)


@dataclass
class ConversionReport:
    mode: str
    seed: Optional[int]
    segments: List[SegmentConversion]
    n_channels: int
    n_segments: int

    def to_json(self) -> str:
        return json.dumps({
            "mode": self.mode,
            "seed": self.seed,
            "n_segments": self.n_segments,
            "n_channels": self.n_channels,
            "segments": [
                {
                    "qubit": s.qubit, "index": s.index, "r": s.r, "d_s": s.d_s,
                    "first_hit": s.first_hit,
                    "channels": [
                        {"site": c[0], "n_qubits": c[1], "rate": c[2]}
                        for c in s.channels
                    ],
                }
                for s in self.segments
            ],
        }, indent=None, separators=(",", ":"))


def _strip_skeleton(ce: ErasureCircuit):
    """Precompute the stripped instruction skeleton and record renumbering.

    The skeleton is shared by every converted instance: entries are either
    final instructions (records already renumbered) or ("site", id) splice
    points where per-instance channels are inserted.
    """
    cached = getattr(ce, "_skeleton_cache", None)
    if cached is not None:
        return cached
    ec_records = {
        ins.record for ins in ce.circuit.instructions if isinstance(ins, ECCheck)
    }
    rec_map: Dict[int, int] = {}
    next_rec = 0
    skeleton: List[object] = []
    for ins in ce.circuit.instructions:
        if isinstance(ins, ECCheck):
            continue
        if isinstance(ins, Reset) and ins.cond_record is not None:
            continue
        if isinstance(ins, (PauliChannel1, PauliChannel2)) and ins.group is not None:
            continue  # reinitialization noise of a dropped conditional reset
        if isinstance(ins, MeasFlip):
            if ins.record in ec_records:
                continue
            skeleton.append(MeasFlip(rec_map[ins.record], ins.prob))
        elif isinstance(ins, ErasureSite):
            skeleton.append(("site", ins.site_id))
        elif isinstance(ins, Measure):
            rec_map[ins.record] = next_rec
            skeleton.append(Measure(ins.basis, ins.qubit, next_rec))
            next_rec += 1
        elif isinstance(ins, Detector):
            skeleton.append(Detector(tuple(rec_map[r] for r in ins.records)))
        elif isinstance(ins, Observable):
            skeleton.append(Observable(ins.index, tuple(rec_map[r] for r in ins.records)))
        else:
            skeleton.append(ins)
    result = (skeleton, next_rec)
    ce._skeleton_cache = result
    return result


def convert(ce: ErasureCircuit, log: ErasureLog, mode: str,
            rng_seed=None) -> Tuple[Circuit, ConversionReport]:
    """Realize one sampled erasure pattern as a stabilizer circuit.

    The flags in `log` align with ce.segments.  Deterministic for fixed
    (ce, log, mode, rng_seed); the seed only matters for the exact
    engine's per-instance first-hit draws.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    rng = np.random.default_rng(rng_seed)
    e, q = ce.noise.e, ce.noise.q

    site_channels: Dict[int, object] = {}
    report_segments: List[SegmentConversion] = []
    n_channels = 0

    for seg_idx, seg in enumerate(ce.segments):
        if seg.ec_record is None:
            continue
        d_s = int(log.flags[seg_idx])
        r = seg.r
        pv = posteriors(d_s, e, q, r)
        entry = SegmentConversion(seg.qubit, seg.index, r, d_s, None, [])
        if mode == "exact":
            chain = bernoulli_chain(pv)
            k = chain.sample_first_hit(rng)
            entry.first_hit = k
            for j in range(k, r + 1):  # suffix interaction sites k..r
                rate = exact_mechanism_rate(chain.b[j - 1], r + 2 - j)
                if rate > 0.0:
                    site = seg.sites[j - 1]
                    partner = seg.interactions[j - 1][1]
                    site_channels[site] = PauliChannel2(
                        seg.qubit, partner, uniform_2q_mechanisms(rate), src=site
                    )
                    entry.channels.append((site, 2, rate))
            rate = exact_mechanism_rate(chain.b[r], 1)
            if rate > 0.0:
                site = seg.sites[r]
                site_channels[site] = PauliChannel1(
                    seg.qubit, uniform_1q_mechanisms(rate), src=site
                )
                entry.channels.append((site, 1, rate))
        else:
            abar = cumulative(pv)
            for j in range(1, r + 1):
                rate = approx_mechanism_rate(abar[j - 1])
                if rate > 0.0:
                    site = seg.sites[j - 1]
                    partner = seg.interactions[j - 1][1]
                    site_channels[site] = PauliChannel1(
                        partner, uniform_1q_mechanisms(rate), src=site
                    )
                    entry.channels.append((site, 1, rate))
            rate = approx_mechanism_rate(abar[r])
            if rate > 0.0:
                site = seg.sites[r]
                site_channels[site] = PauliChannel1(
                    seg.qubit, uniform_1q_mechanisms(rate), src=site
                )
                entry.channels.append((site, 1, rate))
        n_channels += len(entry.channels)
        report_segments.append(entry)

    skeleton, n_records = _strip_skeleton(ce)
    out: List[cir.Instruction] = []
    for entry_ in skeleton:
        if isinstance(entry_, tuple):
            channel = site_channels.get(entry_[1])
            if channel is not None:
                out.append(channel)
        else:
            out.append(entry_)

    meta = dict(ce.circuit.metadata)
    meta["engine"] = mode
    converted = Circuit(
        n_qubits=ce.circuit.n_qubits,
        instructions=out,
        n_records=n_records,
        n_detectors=ce.circuit.n_detectors,
        n_observables=ce.circuit.n_observables,
        metadata=meta,
    )
    report = ConversionReport(
        mode=mode,
        seed=rng_seed if isinstance(rng_seed, int) else None,
        segments=report_segments,
        n_channels=n_channels,
        n_segments=len(report_segments),
    )
    return converted, report
