import itertools
import math

import numpy as np
import pytest

from bibieq.dem import DetectorErrorModel
from bibieq.decoder import BatchStats, Decoder, DecoderConfig, decode, decode_batch
from bibieq.framesim import ShotBatch


def make_dem(raw, n_det, n_obs=1):
    return DetectorErrorModel.from_raw(raw, n_det, n_obs)


def random_dem(rng, n_det=8, n_mech=12, p=0.08):
    raw = []
    for _ in range(n_mech):
        k = int(rng.integers(1, 4))
        dets = tuple(sorted(rng.choice(n_det, size=k, replace=False).tolist()))
        obs = (0,) if rng.random() < 0.4 else ()
        raw.append((p, dets, obs))
    return make_dem(raw, n_det)


def syndrome_of(dem, error_mask):
    syn = np.zeros(dem.n_detectors, dtype=np.uint8)
    for j in np.flatnonzero(error_mask):
        for d in dem.mechanisms[j][1]:
            syn[d] ^= 1
    return syn


def exhaustive_min_weight(dem, syn):
    target = int(sum(1 << d for d in np.flatnonzero(syn)))
    masks = [sum(1 << d for d in m[1]) for m in dem.mechanisms]
    best = None
    for pattern in range(2 ** dem.n_mechanisms):
        acc = 0
        v = pattern
        while v:
            low = v & -v
            acc ^= masks[low.bit_length() - 1]
            v ^= low
        if acc == target:
            w = bin(pattern).count("1")
            if best is None or w < best:
                best = w
    return best


def test_zero_syndrome():
    dem = make_dem([(0.1, (0,), (0,))], 1)
    res = decode(dem, [0])
    assert res.converged and not res.fallback_used and not res.discard
    assert not res.predicted_observables.any()


def test_single_mechanism():
    dem = make_dem([(0.1, (0, 1), (0,))], 2)
    res = decode(dem, [1, 1])
    assert res.predicted_observables.tolist() == [True]
    res = decode(dem, [1, 0])
    assert res.discard  # half the flip set cannot be explained


def test_syndrome_satisfaction_exact():
    """Every non-discarded decode reproduces its syndrome exactly."""
    rng = np.random.default_rng(7)
    cfg = DecoderConfig(osd_order=6)
    for _ in range(150):
        dem = random_dem(rng)
        dec = Decoder(dem, cfg)
        err = rng.random(dem.n_mechanisms) < 0.2
        syn = syndrome_of(dem, err)
        post, hard, converged = dec.bp_posteriors(syn)
        if converged:
            assert np.array_equal(syndrome_of(dem, hard), syn)
        res = dec.decode(syn)
        assert not res.discard


def test_osd_min_weight_rate():
    rng = np.random.default_rng(11)
    cfg = DecoderConfig(osd_order=10)
    hits = total = 0
    for _ in range(200):
        dem = random_dem(rng)
        err = rng.random(dem.n_mechanisms) < 0.15
        if not err.any():
            continue
        syn = syndrome_of(dem, err)
        dec = Decoder(dem, cfg)
        post, hard, converged = dec.bp_posteriors(syn)
        if converged:
            weight = int(hard.sum())
        else:
            from bibieq._kernels import backend
            order = np.argsort(post, kind="stable").astype(np.int32)
            bits = np.zeros(64, dtype=np.uint8)
            bits[:8] = syn
            words = np.packbits(bits, bitorder="little").view(np.uint64)
            sol, ok = backend.osd_solve(8, dec.col_ptr, dec.col_rows, order,
                                        post, words, 10)
            assert ok
            weight = int(sol.sum())
        total += 1
        hits += weight == exhaustive_min_weight(dem, syn)
    assert hits / total >= 0.9


def test_bp_exact_on_trees():
    """On an acyclic model BP posteriors equal exact conditional marginals."""
    # chain: m0 -[d0]- m1 -[d1]- m2 : tree Tanner graph
    raw = [(0.1, (0,), ()), (0.2, (0, 1), ()), (0.15, (1, 2), ()), (0.05, (2,), ())]
    dem = make_dem(raw, 3)
    dec = Decoder(dem, DecoderConfig(bp_max_iters=30))
    probs = [m[0] for m in dem.mechanisms]
    for syn in itertools.product((0, 1), repeat=3):
        post, hard, converged = dec.bp_posteriors(np.array(syn, dtype=np.uint8), early_stop=False)
        # brute-force conditional marginals
        joint = np.zeros(len(probs))
        norm = 0.0
        for pattern in itertools.product((0, 1), repeat=len(probs)):
            s = [0, 0, 0]
            pr = 1.0
            for j, bit in enumerate(pattern):
                pr *= probs[j] if bit else 1 - probs[j]
                if bit:
                    for d in dem.mechanisms[j][1]:
                        s[d] ^= 1
            if tuple(s) == syn:
                norm += pr
                for j, bit in enumerate(pattern):
                    if bit:
                        joint[j] += pr
        if norm == 0.0:
            continue
        exact = joint / norm
        bp = 1.0 / (1.0 + np.exp(post))
        assert np.allclose(bp, exact, atol=1e-9), (syn, bp, exact)


def test_osd_order_monotone():
    """Raising the sweep order never increases the returned soft weight."""
    rng = np.random.default_rng(23)
    from bibieq._kernels import backend
    for _ in range(40):
        dem = random_dem(rng, n_det=10, n_mech=16, p=0.1)
        dec = Decoder(dem, DecoderConfig())
        err = rng.random(dem.n_mechanisms) < 0.25
        syn = syndrome_of(dem, err)
        if not syn.any():
            continue
        post, _, _ = dec.bp_posteriors(syn)
        order = np.argsort(post, kind="stable").astype(np.int32)
        bits = np.zeros(64, dtype=np.uint8)
        bits[:10] = syn
        words = np.packbits(bits, bitorder="little").view(np.uint64)
        weights = []
        for lam in (0, 2, 4, 8):
            sol, ok = backend.osd_solve(10, dec.col_ptr, dec.col_rows, order,
                                        post, words, lam)
            if not ok:
                break
            weights.append(float(post[sol.astype(bool)].sum()))
        for a, b in zip(weights, weights[1:]):
            assert b <= a + 1e-12


def test_discard_outside_column_space():
    dem = make_dem([(0.1, (0,), ()), (0.1, (0, 1), ())], 3)
    res = decode(dem, [0, 0, 1])
    assert res.discard and res.predicted_observables is None
    stats = decode_batch(dem, ShotBatch(
        np.array([[0, 0, 1], [1, 1, 0]], dtype=bool),
        np.zeros((2, 1), dtype=bool)))
    assert stats.discards == 1
    assert stats.effective_shots == 1


def test_decode_batch_counts():
    dem = make_dem([(0.3, (0,), (0,)), (0.3, (1,), (1,))], 2, n_obs=2)
    detectors = np.array([[1, 0], [0, 1], [1, 1], [0, 0]], dtype=bool)
    observables = np.array([[1, 0], [0, 0], [1, 1], [0, 0]], dtype=bool)
    stats = decode_batch(dem, ShotBatch(detectors, observables))
    # shot 0: predicts obs0 -> match; shot 1 predicts obs1 -> mismatch;
    # shot 2 predicts both -> match; shot 3 zero -> match
    assert stats.errors == 1
    assert stats.per_observable_errors.tolist() == [0, 1]


def test_decode_batch_noiseless():
    dem = make_dem([(0.1, (0,), (0,))], 1)
    batch = ShotBatch(np.zeros((20, 1), dtype=bool), np.zeros((20, 1), dtype=bool))
    stats = decode_batch(dem, batch)
    assert stats.errors == 0 and stats.discards == 0


def test_union_bound_sanity():
    """Errors from model-sampled shots stay below the union bound at tiny p."""
    rng = np.random.default_rng(5)
    raw = [(0.002, (d,), ((0,) if d % 3 == 0 else ())) for d in range(6)]
    raw += [(0.002, (d, (d + 1) % 6), ()) for d in range(6)]
    dem = make_dem(raw, 6)
    det, obs = dem.sample(20_000, rng_seed=8)
    stats = decode_batch(dem, ShotBatch(det, obs))
    union = sum(m[0] for m in dem.mechanisms)
    assert stats.errors / stats.effective_shots < union


def test_empty_dem():
    dem = make_dem([], 2, n_obs=1)
    res = decode(dem, [0, 0])
    assert not res.discard and not res.predicted_observables.any()
    res = decode(dem, [1, 0])
    assert res.discard


def test_config_validation():
    with pytest.raises(ValueError):
        DecoderConfig(bp_max_iters=0)
    with pytest.raises(ValueError):
        DecoderConfig(osd_order=-1)
