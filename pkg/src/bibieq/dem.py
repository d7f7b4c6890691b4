"""Detector error model: independent mechanisms with detector/observable flip sets."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np


def xor_probs(p: float, q: float) -> float:
    """Probability that an odd number of two independent events occurs."""
    return p + q - 2.0 * p * q


@dataclass
class DetectorErrorModel:
    """List of (probability, detector flips, observable flips) mechanisms.

    Mechanisms with identical flip sets are merged during construction via
    the XOR rule, so probabilities stay in (0, 1/2] for inputs in that
    range.  Mechanism order is canonical (sorted by flip sets) and the
    model is independent of any shot sampling.
    """

    mechanisms: List[Tuple[float, Tuple[int, ...], Tuple[int, ...]]]
    n_detectors: int
    n_observables: int

    @property
    def n_mechanisms(self) -> int:
        return len(self.mechanisms)

    @staticmethod
    def from_raw(raw: Sequence[Tuple[float, Tuple[int, ...], Tuple[int, ...]]],
                 n_detectors: int, n_observables: int) -> "DetectorErrorModel":
        merged: Dict[Tuple[Tuple[int, ...], Tuple[int, ...]], float] = {}
        for prob, dets, obs in raw:
            if prob == 0.0 or (not dets and not obs):
                continue
            key = (tuple(sorted(dets)), tuple(sorted(obs)))
            if key in merged:
                merged[key] = xor_probs(merged[key], prob)
            else:
                merged[key] = prob
        mechanisms = [
            (p, key[0], key[1]) for key, p in sorted(merged.items()) if p > 0.0
        ]
        return DetectorErrorModel(mechanisms, n_detectors, n_observables)

    # -- decoding views -----------------------------------------------------
    def check_arrays(self):
        """CSR-style arrays of the detector (check) matrix, mechanism-major."""
        probs = np.array([m[0] for m in self.mechanisms], dtype=np.float64)
        col_ptr = np.zeros(len(self.mechanisms) + 1, dtype=np.int32)
        rows: List[int] = []
        for i, (_, dets, _) in enumerate(self.mechanisms):
            rows.extend(dets)
            col_ptr[i + 1] = len(rows)
        col_rows = np.array(rows, dtype=np.int32)
        obs_masks = [m[2] for m in self.mechanisms]
        return probs, col_ptr, col_rows, obs_masks

    # -- sampling (used for the sampler/model consistency checks) ------------
    def sample(self, n_shots: int, rng_seed) -> Tuple[np.ndarray, np.ndarray]:
        """Draw shots directly from the model; returns (detectors, observables)."""
        rng = np.random.default_rng(rng_seed)
        det = np.zeros((n_shots, self.n_detectors), dtype=bool)
        obs = np.zeros((n_shots, self.n_observables), dtype=bool)
        for prob, dets, obss in self.mechanisms:
            fired = rng.random(n_shots) < prob
            if not fired.any():
                continue
            for d in dets:
                det[fired, d] ^= True
            for o in obss:
                obs[fired, o] ^= True
        return det, obs

    # -- text form ------------------------------------------------------------
    def to_text(self) -> str:
        lines = [f"# dem {self.n_detectors} {self.n_observables}"]
        for prob, dets, obs in self.mechanisms:
            refs = " ".join([f"D{d}" for d in dets] + [f"L{o}" for o in obs])
            lines.append(f"error({prob!r}) {refs}".rstrip())
        return "\n".join(lines) + "\n"

    @staticmethod
    def from_text(text: str) -> "DetectorErrorModel":
        n_det = n_obs = 0
        raw = []
        for line in text.splitlines():
            line = line.strip()
            if line.startswith("# dem"):
                parts = line.split()
                n_det, n_obs = int(parts[2]), int(parts[3])
                continue
            if not line or line.startswith("#"):
                continue
            if not line.startswith("error("):
                raise ValueError(f"unparseable dem line {line!r}")
            head, _, rest = line.partition(")")
            prob = float(head[len("error("):])
            dets, obs = [], []
            for tok in rest.split():
                if tok.startswith("D"):
                    dets.append(int(tok[1:]))
                elif tok.startswith("L"):
                    obs.append(int(tok[1:]))
                else:
                    raise ValueError(f"bad dem token {tok!r}")
            raw.append((prob, tuple(dets), tuple(obs)))
        return DetectorErrorModel.from_raw(raw, n_det, n_obs)
