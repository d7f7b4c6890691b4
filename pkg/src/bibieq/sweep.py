"""End-to-end sweep orchestration.

For each (code, schedule, engine, e) configuration the memory circuit is
built once, compiled once, and then `instances` erasure patterns are
sampled, converted, reduced to detector error models, shot-sampled and
decoded.  Child seeds derive from the master seed by hashing
(master, code, schedule, engine, e-index, instance, purpose), so results
are independent of worker scheduling and the sweep is resumable:
completed configurations present in the output CSV are skipped as long
as the stored config hash matches.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field, asdict
from multiprocessing import get_context
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from . import __version__
from .bbcode import BBCodeSpec, build_check_matrices, extract_logicals, get_code
from .circuit import Circuit, QubitLayout, build_memory_circuit
from .compiler import ErasureCircuit, NoiseLaw, compile as compile_erasure, get_schedule, sample_erasure_pattern
from .decoder import BatchStats, Decoder, DecoderConfig
from .engines import convert
from .framesim import baseline_merged, build_sensitivity_table, extract_dem, sample_shots
from .metrics import SweepRecord, records_from_csv, records_to_csv
from .tableau import reference_run


def child_seed(master: int, *components, purpose: str = "") -> int:
    """Deterministic 63-bit child seed from the master seed and a path."""
    text = ":".join([str(master), *map(str, components), purpose])
    digest = hashlib.sha256(text.encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1


@dataclass
class ExperimentConfig:
    codes: Tuple[str, ...] = ("72",)
    schedules: Tuple[str, ...] = ("2ec", "4ec")
    engines: Tuple[str, ...] = ("exact", "approx")
    e_grid: Tuple[float, ...] = ()
    beta: float = 0.1
    gamma: float = 1.0
    instances: int = 200
    shots: int = 200
    rounds: Optional[int] = None  # None: use each code's distance
    basis: str = "X"
    bp_max_iters: int = 30
    osd_order: int = 0
    master_seed: int = 0
    out_dir: str = "results"
    workers: Optional[int] = None

    def __post_init__(self):
        if self.instances < 1 or self.shots < 1:
            raise ValueError("instances and shots must be >= 1")
        if any(not (0.0 <= e < 1.0) for e in self.e_grid):
            raise ValueError("e grid values must lie in [0, 1)")

    def config_hash(self) -> str:
        payload = asdict(self)
        payload.pop("out_dir")
        payload.pop("workers")
        text = json.dumps(payload, sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def log_grid(e_min: float, e_max: float, points: int) -> Tuple[float, ...]:
    return tuple(float(x) for x in np.logspace(np.log10(e_min), np.log10(e_max), points))


DESK_PROFILE = dict(instances=200, shots=200, osd_order=0, bp_max_iters=30)
# full-scale settings used for the published curves; expensive
PAPER_PROFILE = dict(instances=2000, shots=500, osd_order=60, bp_max_iters=30)


@dataclass
class _Template:
    spec: BBCodeSpec
    circuit: Circuit
    rounds: int


_template_cache: Dict[Tuple[str, int, str], _Template] = {}
_compiled_cache: Dict[Tuple[str, int, str, str, float, float, float], tuple] = {}


def _get_template(code: str, rounds: Optional[int], basis: str) -> _Template:
    spec = get_code(code)
    r = rounds if rounds is not None else spec.claimed_d
    key = (spec.name, r, basis)
    tpl = _template_cache.get(key)
    if tpl is None:
        layout = QubitLayout(spec)
        checks = build_check_matrices(spec)
        logicals = extract_logicals(checks)
        c0 = build_memory_circuit(spec, layout, r, basis, checks, logicals)
        reference_run(c0)  # validates the detector schema once per template
        tpl = _Template(spec, c0, r)
        _template_cache[key] = tpl
    return tpl


def _get_compiled(code: str, rounds: Optional[int], basis: str, schedule: str,
                  e: float, beta: float, gamma: float):
    tpl = _get_template(code, rounds, basis)
    key = (tpl.spec.name, tpl.rounds, basis, schedule, e, beta, gamma)
    entry = _compiled_cache.get(key)
    if entry is None:
        ce = compile_erasure(tpl.circuit, NoiseLaw(e, beta, gamma), get_schedule(schedule))
        table = build_sensitivity_table(ce)
        baseline = baseline_merged(ce, table)
        entry = (tpl, ce, table, baseline)
        _compiled_cache[key] = entry
    return entry


@dataclass(frozen=True)
class _Unit:
    code: str
    schedule: str
    engine: str
    e_index: int
    e: float


def run_unit(cfg: ExperimentConfig, unit: _Unit) -> SweepRecord:
    """All instances of one (code, schedule, engine, e) configuration."""
    tpl, ce, table, baseline = _get_compiled(
        unit.code, cfg.rounds, cfg.basis, unit.schedule, unit.e, cfg.beta, cfg.gamma)
    dcfg = DecoderConfig(bp_max_iters=cfg.bp_max_iters, osd_order=cfg.osd_order)
    shots = errors = discards = 0
    per_obs = np.zeros(tpl.circuit.n_observables, dtype=np.int64)
    for inst in range(cfg.instances):
        args = (unit.code, unit.schedule, unit.engine, unit.e_index, inst)
        pattern = sample_erasure_pattern(
            ce, child_seed(cfg.master_seed, *args, purpose="pattern"))
        converted, _ = convert(
            ce, pattern, unit.engine,
            child_seed(cfg.master_seed, *args, purpose="convert"))
        dem = extract_dem(converted, table, baseline)
        batch = sample_shots(
            converted, cfg.shots,
            child_seed(cfg.master_seed, *args, purpose="shots"))
        stats = Decoder(dem, dcfg).decode_batch(batch)
        shots += stats.shots
        errors += stats.errors
        discards += stats.discards
        per_obs += stats.per_observable_errors
    noise = NoiseLaw(unit.e, cfg.beta, cfg.gamma)
    return SweepRecord(
        code=unit.code, schedule=unit.schedule, engine=unit.engine,
        e=unit.e, p=noise.p, q=noise.q,
        instances=cfg.instances, shots=shots, errors=errors, discards=discards,
        per_observable_errors=tuple(int(x) for x in per_obs),
        seed=cfg.master_seed, rounds=tpl.rounds,
    )


def _worker(args) -> SweepRecord:
    cfg_dict, unit = args
    cfg = ExperimentConfig(**cfg_dict)
    return run_unit(cfg, unit)


def _record_key(r: SweepRecord) -> tuple:
    return (r.code, r.schedule, r.engine, repr(r.e))


def run_sweep(cfg: ExperimentConfig, progress: bool = False) -> List[SweepRecord]:
    """Run (or resume) the full sweep, persisting CSV + provenance."""
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "records.csv"
    prov_path = out / "provenance.json"
    cfg_hash = cfg.config_hash()

    done: Dict[tuple, SweepRecord] = {}
    if prov_path.exists():
        prov = json.loads(prov_path.read_text())
        if prov.get("config_hash") != cfg_hash:
            raise ValueError(
                f"{prov_path} belongs to a different configuration "
                f"({prov.get('config_hash')} != {cfg_hash}); use a fresh out_dir")
        if csv_path.exists():
            for rec in records_from_csv(csv_path.read_text()):
                done[_record_key(rec)] = rec

    units = [
        _Unit(code, schedule, engine, e_idx, e)
        for code in cfg.codes
        for schedule in cfg.schedules
        for engine in cfg.engines
        for e_idx, e in enumerate(cfg.e_grid)
    ]
    pending = [u for u in units
               if (u.code, u.schedule, u.engine, repr(u.e)) not in done]

    prov_path.write_text(json.dumps({
        "config": asdict(cfg),
        "config_hash": cfg_hash,
        "version": __version__,
        "n_units": len(units),
    }, indent=2))

    def persist():
        records = sorted(done.values(),
                         key=lambda r: (r.code, r.schedule, r.engine, r.e))
        tmp = csv_path.with_suffix(".csv.tmp")
        tmp.write_text(records_to_csv(records))
        tmp.replace(csv_path)

    n_workers = cfg.workers
    if n_workers is None:
        n_workers = int(os.environ.get("BIBIEQ_WORKERS", "0")) or os.cpu_count() or 1
    n_workers = max(1, min(n_workers, len(pending) or 1))

    if pending:
        cfg_dict = asdict(cfg)
        if n_workers == 1:
            for i, unit in enumerate(pending):
                rec = run_unit(cfg, unit)
                done[_record_key(rec)] = rec
                persist()
                if progress:
                    print(f"[{i + 1}/{len(pending)}] {unit.code} {unit.schedule} "
                          f"{unit.engine} e={unit.e:.3e}: {rec.errors}/{rec.effective_shots}",
                          flush=True)
        else:
            ctx = get_context("fork")
            with ctx.Pool(n_workers) as pool:
                for i, rec in enumerate(pool.imap_unordered(
                        _worker, [(cfg_dict, u) for u in pending])):
                    done[_record_key(rec)] = rec
                    persist()
                    if progress:
                        print(f"[{i + 1}/{len(pending)}] {rec.code} {rec.schedule} "
                              f"{rec.engine} e={rec.e:.3e}: {rec.errors}/{rec.effective_shots}",
                              flush=True)
    persist()
    return sorted(done.values(), key=lambda r: (r.code, r.schedule, r.engine, r.e))
