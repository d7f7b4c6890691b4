import numpy as np
import pytest
from scipy import stats

from bibieq import circuit as cir
from bibieq.bbcode import get_code
from bibieq.circuit import (
    CNot, Circuit, Detector, Measure, MeasFlip, Observable, PauliChannel1,
    PauliChannel2, QubitLayout, Reset, build_memory_circuit,
)
from bibieq.compiler import NoiseLaw, S_4EC, compile, sample_erasure_pattern
from bibieq.dem import DetectorErrorModel, xor_probs
from bibieq.engines import convert
from bibieq.framesim import (
    ShotBatch, baseline_merged, build_sensitivity_table, extract_dem, sample_shots,
)


def toy(instructions, n_qubits, n_records, n_detectors, n_observables=0):
    return Circuit(n_qubits, instructions, n_records, n_detectors, n_observables, {})


def test_noiseless_all_zero():
    spec = get_code("72")
    c = build_memory_circuit(spec, QubitLayout(spec), 2, "X")
    batch = sample_shots(c, 130, rng_seed=3)
    assert not batch.detectors.any()
    assert not batch.observables.any()
    assert batch.detectors.shape == (130, c.n_detectors)


def test_forced_flip():
    c = toy([Reset("Z", 0), PauliChannel1(0, (("X", 1.0),)),
             Measure("Z", 0, 0), Detector((0,))], 1, 1, 1)
    batch = sample_shots(c, 64, rng_seed=1)
    assert batch.detectors.all()


def test_basis_selectivity():
    # Z noise is invisible to a Z measurement, X noise to an X measurement
    c = toy([Reset("Z", 0), PauliChannel1(0, (("Z", 1.0),)),
             Measure("Z", 0, 0), Detector((0,))], 1, 1, 1)
    assert not sample_shots(c, 64, rng_seed=1).detectors.any()
    c = toy([Reset("X", 0), PauliChannel1(0, (("X", 1.0),)),
             Measure("X", 0, 0), Detector((0,))], 1, 1, 1)
    assert not sample_shots(c, 64, rng_seed=1).detectors.any()
    c = toy([Reset("X", 0), PauliChannel1(0, (("Y", 1.0),)),
             Measure("X", 0, 0), Detector((0,))], 1, 1, 1)
    assert sample_shots(c, 64, rng_seed=1).detectors.all()


def test_binomial_marginal():
    c = toy([Reset("Z", 0), PauliChannel1(0, (("X", 0.3),)),
             Measure("Z", 0, 0), Detector((0,))], 1, 1, 1)
    batch = sample_shots(c, 100_000, rng_seed=5)
    rate = batch.detectors.mean()
    sigma = (0.3 * 0.7 / 100_000) ** 0.5
    assert abs(rate - 0.3) < 3 * sigma


def test_reset_clears_frame():
    c = toy([Reset("Z", 0), PauliChannel1(0, (("X", 1.0),)), Reset("Z", 0),
             Measure("Z", 0, 0), Detector((0,))], 1, 1, 1)
    assert not sample_shots(c, 64, rng_seed=1).detectors.any()


def test_correlated_two_qubit_mechanism():
    # an XX mechanism fires on both qubits together
    c = toy([
        Reset("Z", 0), Reset("Z", 1),
        PauliChannel2(0, 1, (("XX", 0.5),)),
        Measure("Z", 0, 0), Measure("Z", 1, 1),
        Detector((0,)), Detector((1,)),
    ], 2, 2, 2)
    batch = sample_shots(c, 4096, rng_seed=2)
    assert np.array_equal(batch.detectors[:, 0], batch.detectors[:, 1])
    assert 0.3 < batch.detectors[:, 0].mean() < 0.7


def test_meas_flip_independent_of_frame():
    c = toy([Reset("Z", 0), Measure("Z", 0, 0), MeasFlip(0, 1.0),
             Detector((0,))], 1, 1, 1)
    assert sample_shots(c, 64, rng_seed=1).detectors.all()


def test_frame_linearity():
    """Frames from two mechanism sets XOR-compose."""
    def build(p1, p2):
        return toy([
            Reset("Z", 0), Reset("Z", 1),
            PauliChannel1(0, (("X", p1),)),
            CNot(0, 1),
            PauliChannel1(1, (("X", p2),)),
            Measure("Z", 0, 0), Measure("Z", 1, 1),
            Detector((0,)), Detector((1,)),
        ], 2, 2, 2)

    only1 = sample_shots(build(1.0, 0.0), 16, rng_seed=0).detectors
    only2 = sample_shots(build(0.0, 1.0), 16, rng_seed=0).detectors
    both = sample_shots(build(1.0, 1.0), 16, rng_seed=0).detectors
    assert np.array_equal(both, only1 ^ only2)


def test_determinism():
    spec = get_code("72")
    c0 = build_memory_circuit(spec, QubitLayout(spec), 2, "X")
    ce = compile(c0, NoiseLaw(e=0.01), S_4EC)
    log = sample_erasure_pattern(ce, 4)
    c, _ = convert(ce, log, "approx", rng_seed=4)
    a = sample_shots(c, 100, rng_seed=11)
    b = sample_shots(c, 100, rng_seed=11)
    assert np.array_equal(a.detectors, b.detectors)
    assert np.array_equal(a.observables, b.observables)
    c2 = sample_shots(c, 100, rng_seed=12)
    assert not np.array_equal(a.detectors, c2.detectors)


def test_shotbatch_pack_roundtrip():
    rng = np.random.default_rng(0)
    batch = ShotBatch(rng.random((50, 13)) < 0.4, rng.random((50, 3)) < 0.2)
    back = ShotBatch.unpack(batch.pack())
    assert np.array_equal(back.detectors, batch.detectors)
    assert np.array_equal(back.observables, batch.observables)


# -- detector error model extraction ------------------------------------------

def hand_oracle_circuit():
    """Two data qubits + ancilla parity check, one mechanism to propagate.

    An X on data qubit 0 before the CNOTs flips the ancilla parity record
    (detector 0) and the final readout of qubit 0 (detector 1, observable 0).
    """
    ins = [
        Reset("Z", 0), Reset("Z", 1), Reset("Z", 2),
        PauliChannel1(0, (("X", 0.25),)),
        CNot(0, 2), CNot(1, 2),
        Measure("Z", 2, 0),
        Measure("Z", 0, 1), Measure("Z", 1, 2),
        Detector((0,)),
        Detector((0, 1, 2)),
        Observable(0, (1,)),
    ]
    return toy(ins, 3, 3, 2, 1)


def test_extract_dem_hand_oracle():
    dem = extract_dem(hand_oracle_circuit())
    assert dem.n_mechanisms == 1
    prob, dets, obs = dem.mechanisms[0]
    assert prob == 0.25
    # X on qubit 0 flips the ancilla record (detector 0 and the parity
    # detector's ancilla term) and the qubit-0 readout: net effect is
    # detector 0 and the observable; detector 1's two flips cancel
    assert dets == (0,)
    assert obs == (0,)


def test_extract_dem_merges_xor():
    ins = [
        Reset("Z", 0),
        PauliChannel1(0, (("X", 0.1),)),
        PauliChannel1(0, (("X", 0.2),)),
        Measure("Z", 0, 0),
        Detector((0,)),
    ]
    dem = extract_dem(toy(ins, 1, 1, 1))
    assert dem.n_mechanisms == 1
    assert dem.mechanisms[0][0] == pytest.approx(xor_probs(0.1, 0.2))


def test_dem_text_roundtrip():
    dem = DetectorErrorModel.from_raw(
        [(0.125, (0, 3), (1,)), (0.25, (2,), ())], 4, 2)
    back = DetectorErrorModel.from_text(dem.to_text())
    assert back.mechanisms == dem.mechanisms
    assert (back.n_detectors, back.n_observables) == (4, 2)


def test_dem_paths_agree_on_pipeline():
    spec = get_code("72")
    c0 = build_memory_circuit(spec, QubitLayout(spec), 2, "X")
    ce = compile(c0, NoiseLaw(e=0.008), S_4EC)
    table = build_sensitivity_table(ce)
    base = baseline_merged(ce, table)
    log = sample_erasure_pattern(ce, 21)
    c, _ = convert(ce, log, "exact", rng_seed=21)
    fast = extract_dem(c, table, base)
    slow = extract_dem(c)
    assert fast.n_mechanisms == slow.n_mechanisms
    for (pa, da, oa), (pb, db, ob) in zip(fast.mechanisms, slow.mechanisms):
        assert (da, oa) == (db, ob)
        assert pa == pytest.approx(pb, abs=1e-14)


def test_dem_sampling_consistency():
    """Direct shot sampling vs model resampling: chi-squared on the joint
    detector pattern distribution."""
    ins = [
        Reset("Z", 0), Reset("Z", 1), Reset("Z", 2),
        PauliChannel1(0, (("X", 0.2), ("Y", 0.05))),
        CNot(0, 2),
        PauliChannel2(0, 1, (("XX", 0.15), ("IZ", 0.1))),
        CNot(1, 2),
        Measure("Z", 2, 0),
        Measure("Z", 0, 1), Measure("Z", 1, 2),
        Detector((0,)), Detector((1,)), Detector((2,)),
        Observable(0, (1, 2)),
    ]
    c = toy(ins, 3, 3, 3, 1)
    n = 100_000
    direct = sample_shots(c, n, rng_seed=31)
    dem = extract_dem(c)
    det_model, obs_model = dem.sample(n, rng_seed=32)

    def pattern_counts(dets, obs):
        bits = np.hstack([dets, obs]).astype(np.uint8)
        weights = 1 << np.arange(bits.shape[1])
        codes = bits @ weights
        return np.bincount(codes, minlength=2 ** bits.shape[1])

    c1 = pattern_counts(direct.detectors, direct.observables)
    c2 = pattern_counts(det_model, obs_model)
    keep = (c1 + c2) >= 10
    pooled = (c1 + c2)[keep] / 2
    chi2 = (((c1[keep] - pooled) ** 2 + (c2[keep] - pooled) ** 2) / pooled).sum()
    dof = keep.sum() - 1
    p_value = stats.chi2.sf(chi2, dof)
    assert p_value > 0.01


def test_reference_values_unused_when_channels_present():
    # detector bits reflect only frame flips; channels with p=0 are inert
    ins = [Reset("Z", 0), PauliChannel1(0, (("X", 0.0),)),
           Measure("Z", 0, 0), Detector((0,))]
    assert not sample_shots(toy(ins, 1, 1, 1), 64, rng_seed=0).detectors.any()
