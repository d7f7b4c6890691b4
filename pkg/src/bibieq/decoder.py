"""BP+OSD decoding over a detector error model.

Sum-product belief propagation runs on the mechanism/detector Tanner
graph with channel priors taken from mechanism probabilities and
early-exits as soon as the hard decision satisfies the syndrome.  On
non-convergence, ordered-statistics decoding takes over: mechanisms are
sorted by posterior suspicion (most likely in error first, stable ties by
index), a pivot basis is eliminated in that order, and for positive
`osd_order` a combination sweep (all single flips plus all pairs among
the `osd_order` most suspicious non-pivot columns) keeps the minimum
soft-weight solution.  A shot is discarded only when its syndrome lies
outside the column space of the detector matrix.

The message-passing and elimination inner loops live in
`bibieq._kernels` (compiled extension when available, pure-Python
fallback otherwise).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ._kernels import backend as _kernels
from .dem import DetectorErrorModel
from .framesim import ShotBatch

LLR_CLAMP = 30.0
PRIOR_FLOOR = 1e-12
_TCAP = math.tanh(0.5 * LLR_CLAMP)
BP_BLOCK = 32  # shots per batched BP call


@dataclass(frozen=True)
class DecoderConfig:
    bp_max_iters: int = 30
    osd_order: int = 0

    def __post_init__(self):
        if self.bp_max_iters < 1:
            raise ValueError("bp_max_iters must be >= 1")
        if self.osd_order < 0:
            raise ValueError("osd_order must be >= 0")


@dataclass
class DecodeResult:
    predicted_observables: Optional[np.ndarray]
    converged: bool
    fallback_used: bool
    discard: bool


@dataclass
class BatchStats:
    shots: int
    errors: int
    discards: int
    per_observable_errors: np.ndarray

    @property
    def effective_shots(self) -> int:
        return self.shots - self.discards


class Decoder:
    """Decoding context prepared once per detector error model."""

    def __init__(self, dem: DetectorErrorModel, cfg: DecoderConfig = DecoderConfig()):
        self.dem = dem
        self.cfg = cfg
        self.n_det = dem.n_detectors
        self.n_obs = dem.n_observables
        n_mech = dem.n_mechanisms
        probs = np.clip(
            np.array([m[0] for m in dem.mechanisms], dtype=np.float64),
            PRIOR_FLOOR, 0.5,
        )
        # channel prior in the tanh half-angle domain: tanh(llr/2) = 1-2p
        self.t_prior = 1.0 - 2.0 * probs

        # edge arrays sorted by check, plus the per-variable view
        edge_chk: List[int] = []
        edge_var: List[int] = []
        for j, (_, dets, _) in enumerate(dem.mechanisms):
            for d in dets:
                edge_chk.append(d)
                edge_var.append(j)
        edge_chk_arr = np.array(edge_chk, dtype=np.int32)
        edge_var_arr = np.array(edge_var, dtype=np.int32)
        order = np.argsort(edge_chk_arr, kind="stable")
        self.edge_var = np.ascontiguousarray(edge_var_arr[order])
        sorted_chk = edge_chk_arr[order]
        self.check_ptr = np.zeros(self.n_det + 1, dtype=np.int32)
        np.add.at(self.check_ptr, sorted_chk + 1, 1)
        self.check_ptr = np.cumsum(self.check_ptr, dtype=np.int32)

        vorder = np.argsort(self.edge_var, kind="stable")
        self.var_edges = np.ascontiguousarray(vorder.astype(np.int32))
        self.var_ptr = np.zeros(n_mech + 1, dtype=np.int32)
        np.add.at(self.var_ptr, self.edge_var[vorder] + 1, 1)
        self.var_ptr = np.cumsum(self.var_ptr, dtype=np.int32)

        # column view for OSD
        self.col_ptr = np.zeros(n_mech + 1, dtype=np.int32)
        rows: List[int] = []
        for j, (_, dets, _) in enumerate(dem.mechanisms):
            rows.extend(dets)
            self.col_ptr[j + 1] = len(rows)
        self.col_rows = np.array(rows, dtype=np.int32)

        self.obs_masks = [sum(1 << o for o in m[2]) for m in dem.mechanisms]

    # -- helpers -------------------------------------------------------------
    @property
    def n_mech(self) -> int:
        return len(self.obs_masks)

    def _observables_of(self, solution: np.ndarray) -> np.ndarray:
        mask = 0
        for j in np.flatnonzero(solution):
            mask ^= self.obs_masks[j]
        out = np.zeros(self.n_obs, dtype=bool)
        for o in range(self.n_obs):
            out[o] = bool((mask >> o) & 1)
        return out

    # -- decoding ------------------------------------------------------------
    def _posterior_llr(self, t_post: np.ndarray) -> np.ndarray:
        return 2.0 * np.arctanh(np.clip(t_post, -_TCAP, _TCAP))

    def _osd(self, syndrome: np.ndarray, t_post: np.ndarray) -> DecodeResult:
        posterior = self._posterior_llr(t_post)
        order = np.argsort(posterior, kind="stable").astype(np.int32)
        words = (self.n_det + 63) // 64
        bits = np.zeros(words * 64, dtype=np.uint8)
        bits[: self.n_det] = syndrome
        syn_words = np.packbits(bits, bitorder="little").view(np.uint64)
        solution, solvable = _kernels.osd_solve(
            self.n_det, self.col_ptr, self.col_rows, order, posterior,
            syn_words, self.cfg.osd_order)
        if not solvable:
            return DecodeResult(None, False, True, True)
        return DecodeResult(self._observables_of(solution), False, True, False)

    def _decode_block(self, syndromes: np.ndarray) -> List[DecodeResult]:
        """Decode a (n_shots, n_det) block; BP is batched, OSD per shot."""
        results: List[Optional[DecodeResult]] = [None] * syndromes.shape[0]
        nonzero = []
        for i in range(syndromes.shape[0]):
            if not syndromes[i].any():
                results[i] = DecodeResult(np.zeros(self.n_obs, dtype=bool),
                                          True, False, False)
            elif self.n_mech == 0:
                results[i] = DecodeResult(None, False, True, True)
            else:
                nonzero.append(i)
        if nonzero:
            block = np.ascontiguousarray(
                syndromes[nonzero].T.astype(np.uint8))
            hard, t_post, conv, _ = _kernels.bp_decode_batch(
                self.t_prior, self.check_ptr, self.edge_var,
                self.var_ptr, self.var_edges, block, self.cfg.bp_max_iters)
            for k, i in enumerate(nonzero):
                if conv[k]:
                    results[i] = DecodeResult(
                        self._observables_of(hard[:, k]), True, False, False)
                else:
                    results[i] = self._osd(syndromes[i].astype(np.uint8),
                                           t_post[:, k])
        return results  # type: ignore[return-value]

    def decode(self, syndrome: np.ndarray) -> DecodeResult:
        syndrome = np.asarray(syndrome, dtype=np.uint8)
        if syndrome.shape != (self.n_det,):
            raise ValueError(f"syndrome length {syndrome.shape} != {self.n_det}")
        return self._decode_block(syndrome[None, :])[0]

    def bp_posteriors(self, syndrome: np.ndarray, early_stop: bool = True
                      ) -> Tuple[np.ndarray, np.ndarray, bool]:
        """BP-only view: (posterior LLRs, hard decisions, converged).

        With early_stop=False the full iteration budget runs regardless of
        syndrome satisfaction, exposing the message fixed point (exact
        marginals on tree models).
        """
        syndrome = np.asarray(syndrome, dtype=np.uint8)
        block = np.ascontiguousarray(syndrome[:, None])
        hard, t_post, conv, _ = _kernels.bp_decode_batch(
            self.t_prior, self.check_ptr, self.edge_var,
            self.var_ptr, self.var_edges, block, self.cfg.bp_max_iters,
            early_stop)
        return self._posterior_llr(t_post[:, 0]), hard[:, 0], bool(conv[0])

    def decode_batch(self, shots: ShotBatch) -> BatchStats:
        """Count logical failures: a shot errs if any observable mismatches."""
        n_shots = shots.n_shots
        errors = 0
        discards = 0
        per_obs = np.zeros(self.n_obs, dtype=np.int64)
        for start in range(0, n_shots, BP_BLOCK):
            stop = min(start + BP_BLOCK, n_shots)
            results = self._decode_block(shots.detectors[start:stop])
            for i, result in enumerate(results):
                if result.discard:
                    discards += 1
                    continue
                actual = shots.observables[start + i]
                mism = result.predicted_observables != actual
                if mism.any():
                    errors += 1
                    per_obs += mism
        return BatchStats(n_shots, errors, discards, per_obs)


def decode(dem: DetectorErrorModel, syndrome: Sequence[int],
           cfg: DecoderConfig = DecoderConfig()) -> DecodeResult:
    return Decoder(dem, cfg).decode(np.asarray(syndrome, dtype=np.uint8))


def decode_batch(dem: DetectorErrorModel, shots: ShotBatch,
                 cfg: DecoderConfig = DecoderConfig()) -> BatchStats:
    return Decoder(dem, cfg).decode_batch(shots)
