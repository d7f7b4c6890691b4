import pytest

from bibieq import circuit as cir
from bibieq.bbcode import build_check_matrices, get_code, tanner_neighbors
from bibieq.circuit import (
    CNot, Circuit, Detector, Measure, MeasFlip, Observable, PauliChannel1,
    PhaseBoundary, QubitLayout, Reset, build_memory_circuit,
    build_seven_phase_round, from_text, to_stim_text, to_text, validate_circuit,
)


@pytest.fixture(scope="module")
def spec():
    return get_code("72")


@pytest.fixture(scope="module")
def layout(spec):
    return QubitLayout(spec)


def _layers(instructions):
    layers = []
    current = None
    for ins in instructions:
        if isinstance(ins, PhaseBoundary):
            current = []
            layers.append((ins.label, current))
        elif current is not None:
            current.append(ins)
    return layers


def test_seven_phase_counts(spec, layout):
    round_ins = build_seven_phase_round(spec, layout)
    cnots = [i for i in round_ins if isinstance(i, CNot)]
    assert len(cnots) == 12 * spec.n_cells  # 6 per X ancilla + 6 per Z ancilla
    layers = _layers(round_ins)
    assert len(layers) == 7
    assert len(layers[0][1]) == spec.n_cells  # phase 1 runs only one family
    assert len(layers[6][1]) == spec.n_cells
    for label, layer in layers[1:6]:
        assert len(layer) == 2 * spec.n_cells


def test_seven_phase_vertex_disjoint(spec, layout):
    for label, layer in _layers(build_seven_phase_round(spec, layout)):
        seen = set()
        for g in layer:
            assert g.control not in seen and g.target not in seen
            seen.add(g.control)
            seen.add(g.target)


def test_seven_phase_coverage(spec, layout):
    """Per round, CNOT endpoints reproduce the Tanner neighborhoods."""
    round_ins = build_seven_phase_round(spec, layout)
    by_x_anc = {}
    by_z_anc = {}
    for g in (i for i in round_ins if isinstance(i, CNot)):
        if g.control in layout.x_ancillas:
            by_x_anc.setdefault(g.control, set()).add(g.target)
        else:
            assert g.target in layout.z_ancillas
            by_z_anc.setdefault(g.target, set()).add(g.control)
    for cell in spec.cells():
        want_x = {layout.data_l(nb) if sub == "L" else layout.data_r(nb)
                  for sub, nb in tanner_neighbors(spec, "X", cell)}
        assert by_x_anc[layout.anc_x(cell)] == want_x
        want_z = {layout.data_l(nb) if sub == "L" else layout.data_r(nb)
                  for sub, nb in tanner_neighbors(spec, "Z", cell)}
        assert by_z_anc[layout.anc_z(cell)] == want_z


@pytest.mark.parametrize("rounds,basis", [(1, "X"), (2, "X"), (3, "Z")])
def test_memory_circuit_counts(spec, layout, rounds, basis):
    c = build_memory_circuit(spec, layout, rounds, basis)
    n_cells = spec.n_cells
    # basis side gets rounds + 1 detector layers, other side rounds - 1
    assert c.n_detectors == n_cells * rounds + n_cells * (rounds - 1) + n_cells
    assert c.n_observables == 12
    assert c.n_records == 2 * n_cells * rounds + 2 * n_cells
    assert validate_circuit(c) == []


def test_memory_circuit_detector_enumeration(spec, layout):
    """Hand enumeration for two rounds: 36 + 72 + 36 detectors in order."""
    c = build_memory_circuit(spec, layout, 2, "X")
    sizes = [len(i.records) for i in c.instructions if isinstance(i, Detector)]
    assert sizes[:36] == [1] * 36          # absolute first-round X checks
    assert sizes[36:108] == [2] * 72       # consecutive-round comparisons
    assert all(s == 7 for s in sizes[108:])  # final: ancilla + 6 data records


def test_memory_circuit_deterministic(spec, layout):
    a = to_text(build_memory_circuit(spec, layout, 2, "X"))
    b = to_text(build_memory_circuit(spec, layout, 2, "X"))
    assert a == b


def test_rounds_validation(spec, layout):
    with pytest.raises(ValueError):
        build_memory_circuit(spec, layout, 0, "X")
    with pytest.raises(ValueError):
        build_memory_circuit(spec, layout, 1, "Y")


def test_validate_catches_layer_collision():
    ins = [PhaseBoundary("1"), CNot(0, 1), CNot(1, 2)]
    c = Circuit(3, ins, 0, 0, 0, {})
    assert any("two CNOTs" in v for v in validate_circuit(c))


def test_validate_catches_unwritten_record():
    ins = [Reset("Z", 0), Measure("Z", 0, 0), Detector((0,)), Detector((1,))]
    c = Circuit(1, ins, 1, 2, 0, {})
    assert any("non-measurement record" in v for v in validate_circuit(c))


def test_validate_catches_bad_mechanism():
    ins = [PauliChannel1(0, (("Q", 0.1),))]
    c = Circuit(1, ins, 0, 0, 0, {})
    assert any("bad mechanism" in v for v in validate_circuit(c))


def test_validate_cnot_endpoints():
    c = Circuit(2, [CNot(1, 1)], 0, 0, 0, {})
    assert any("coincide" in v for v in validate_circuit(c))


def test_serialization_roundtrip(spec, layout):
    c = build_memory_circuit(spec, layout, 2, "X")
    text = to_text(c)
    back = from_text(text)
    assert to_text(back) == text
    assert back.n_records == c.n_records
    assert back.n_detectors == c.n_detectors


def test_serialization_with_noise_instructions():
    ins = [
        PhaseBoundary("init"),
        Reset("Z", 0),
        PauliChannel1(0, (("X", 0.25), ("Y", 0.125)), src=3),
        Measure("Z", 0, 0),
        MeasFlip(0, 0.0625),
        Detector((0,)),
        Observable(0, (0,)),
    ]
    c = Circuit(1, ins, 1, 1, 1, {"basis": "Z"})
    text = to_text(c)
    assert to_text(from_text(text)) == text


def test_stim_export(spec, layout):
    c = build_memory_circuit(spec, layout, 1, "X")
    text = to_stim_text(c)
    assert "CX" in text and "DETECTOR" in text and "OBSERVABLE_INCLUDE(0)" in text
    # all record references are relative lookbacks
    for line in text.splitlines():
        if line.startswith("DETECTOR"):
            assert "rec[-" in line
