import pytest

from bibieq import circuit as cir
from bibieq.bbcode import get_code
from bibieq.circuit import QubitLayout, build_memory_circuit
from bibieq.tableau import Tableau, reference_run


def test_deterministic_measurements():
    t = Tableau(1)
    out = t.measure_z(0)
    assert out.deterministic and out.const == 0
    t.h(0)
    assert t.measure_x(0).deterministic


def test_random_measurement_allocates_symbol():
    t = Tableau(1)
    t.h(0)
    out = t.measure_z(0)
    assert not out.deterministic
    # measuring again returns the same symbol: state has collapsed
    again = t.measure_z(0)
    assert (out ^ again).deterministic and (out ^ again).const == 0


def test_bell_pair_correlations():
    t = Tableau(2)
    t.reset_x(0)
    t.cnot(0, 1)
    m0 = t.measure_z(0)
    m1 = t.measure_z(1)
    corr = m0 ^ m1
    assert corr.deterministic and corr.const == 0


def test_reset_clears_symbolic_state():
    t = Tableau(1)
    t.h(0)
    t.reset_z(0)
    out = t.measure_z(0)
    assert out.deterministic and out.const == 0


def test_cnot_propagation_reference():
    c = cir.Circuit(2, [
        cir.Reset("Z", 0), cir.Reset("Z", 1),
        cir.CNot(0, 1),
        cir.Measure("Z", 1, 0),
        cir.Detector((0,)),
    ], 1, 1, 0, {})
    ref = reference_run(c)
    assert ref.detector_values == [0]
    assert ref.record_bits == [0]


def test_reference_run_memory_circuit():
    spec = get_code("72")
    layout = QubitLayout(spec)
    c = build_memory_circuit(spec, layout, 2, "X")
    ref = reference_run(c)
    assert all(v == 0 for v in ref.detector_values)
    assert all(v == 0 for v in ref.observable_values)
    assert len(ref.detector_values) == c.n_detectors


def test_reference_run_rejects_nondeterministic_detector():
    # absolute detector on a random measurement
    c = cir.Circuit(1, [
        cir.Reset("X", 0),
        cir.Measure("Z", 0, 0),
        cir.Detector((0,)),
    ], 1, 1, 0, {})
    with pytest.raises(ValueError, match="nondeterministic"):
        reference_run(c)


def test_reference_run_rejects_conditional_reset():
    c = cir.Circuit(1, [
        cir.Measure("Z", 0, 0),
        cir.Reset("Z", 0, cond_record=0),
    ], 1, 0, 0, {})
    with pytest.raises(ValueError, match="conditional"):
        reference_run(c)


def test_reference_ignores_channels():
    c = cir.Circuit(1, [
        cir.Reset("Z", 0),
        cir.PauliChannel1(0, (("X", 1.0),)),
        cir.Measure("Z", 0, 0),
        cir.Detector((0,)),
    ], 1, 1, 0, {})
    # channels never fire on the reference: detector stays zero
    assert reference_run(c).detector_values == [0]
