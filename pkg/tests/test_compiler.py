import numpy as np
import pytest

from bibieq import circuit as cir
from bibieq.bbcode import get_code
from bibieq.circuit import ECCheck, ErasureSite, Measure, QubitLayout, Reset, build_memory_circuit, from_text, to_text, validate_circuit
from bibieq.compiler import (
    BUNDLE_FAMILIES, ECSchedule, NoiseLaw, S_2EC, S_4EC, compile,
    enumerate_segments, get_schedule, load_erasure_circuit, sample_erasure_pattern,
)
from bibieq.engines import ec_outcome_prob


@pytest.fixture(scope="module")
def c0():
    spec = get_code("72")
    return build_memory_circuit(spec, QubitLayout(spec), 3, "X")


@pytest.fixture(scope="module")
def ce_4ec(c0):
    return compile(c0, NoiseLaw(e=0.01), S_4EC)


@pytest.fixture(scope="module")
def ce_2ec(c0):
    return compile(c0, NoiseLaw(e=0.01), S_2EC)


def test_noise_law_scaling():
    noise = NoiseLaw(e=0.02)
    assert noise.p == pytest.approx(0.002)
    assert noise.q == pytest.approx(0.02)
    with pytest.raises(ValueError):
        NoiseLaw(e=1.5)


def test_bundle_partition_sizes():
    sizes = [len(BUNDLE_FAMILIES[b]) for b in "ABCD"]
    assert sizes == [3, 4, 3, 2]
    all_families = [f for fams in BUNDLE_FAMILIES.values() for f in fams]
    assert len(all_families) == 12 == len(set(all_families))


def test_schedule_validation():
    assert get_schedule("4ec").checkpoints == ("A", "B", "C", "D")
    assert get_schedule("2ec").checkpoints == ("B", "D")
    assert get_schedule("ec:A,D").checkpoints == ("A", "D")
    with pytest.raises(ValueError, match="mandatory"):
        ECSchedule("bad", ("A", "B"))
    with pytest.raises(KeyError):
        get_schedule("5ec")


def test_interaction_bounds(ce_4ec, ce_2ec):
    assert ce_4ec.max_r == 2
    assert ce_2ec.max_r == 4


def test_segment_counts_per_data_qubit(ce_4ec, ce_2ec):
    rounds = 3
    for ce, per_round in ((ce_4ec, 4), (ce_2ec, 2)):
        segs = [s for s in ce.segments if s.qubit == 0]
        assert len(segs) == per_round * rounds
        assert all(s.closed_by == "ec" for s in segs)


def test_z_ancilla_profile(ce_4ec):
    spec = get_code("72")
    layout = QubitLayout(spec)
    zanc = layout.anc_z((0, 0))
    rs = [s.r for s in ce_4ec.segments if s.qubit == zanc][:4]
    assert rs == [2, 2, 1, 1]
    labels = [s.checkpoint for s in ce_4ec.segments if s.qubit == zanc][:4]
    assert labels == ["A", "B", "C", "D"]


def test_partition_property(ce_4ec):
    """Every CNOT on every wire lies in exactly one segment."""
    spans = {}
    for seg in ce_4ec.segments:
        spans.setdefault(seg.qubit, []).append(seg)
    for pos, ins in enumerate(ce_4ec.circuit.instructions):
        if isinstance(ins, cir.CNot):
            for q in (ins.control, ins.target):
                hits = [s for s in spans[q]
                        if s.start < pos and (s.end is None or pos <= s.end)]
                assert len(hits) == 1


def test_every_ec_followed_by_boundary_op(ce_4ec):
    """The check-plus-reset policy: a flag check is resolved by a reset or
    readout on the same wire before any further gate."""
    ins = ce_4ec.circuit.instructions
    for pos, x in enumerate(ins):
        if isinstance(x, ECCheck):
            for later in ins[pos + 1:]:
                if isinstance(later, (Reset, Measure)) and later.qubit == x.qubit:
                    break
                assert not (isinstance(later, cir.CNot)
                            and x.qubit in (later.control, later.target))
            else:
                pytest.fail("EC without boundary operation")


def test_sites_match_segments(ce_2ec):
    for seg in ce_2ec.segments:
        assert len(seg.sites) == seg.r + 1


def test_compile_deterministic(c0):
    a = compile(c0, NoiseLaw(e=0.01), S_4EC)
    b = compile(c0, NoiseLaw(e=0.01), S_4EC)
    assert to_text(a.circuit) == to_text(b.circuit)


def test_compile_validates(ce_4ec, ce_2ec):
    assert validate_circuit(ce_4ec.circuit) == []
    assert validate_circuit(ce_2ec.circuit) == []


def test_zero_noise_channel_strengths(c0):
    ce = compile(c0, NoiseLaw(e=0.0), S_4EC)
    for ins in ce.circuit.instructions:
        if isinstance(ins, (cir.PauliChannel1, cir.PauliChannel2)):
            assert all(p == 0.0 for _, p in ins.mechanisms)
        elif isinstance(ins, cir.MeasFlip):
            assert ins.prob == 0.0


def test_enumerate_segments_roundtrip(ce_2ec):
    derived = enumerate_segments(ce_2ec.circuit)
    key = lambda s: (s.qubit, s.index, s.start, s.end, tuple(s.interactions),
                     tuple(s.sites), s.ec_record, s.checkpoint)
    assert sorted(map(key, derived)) == sorted(map(key, ce_2ec.segments))


def test_serialized_erasure_circuit_loads(ce_2ec):
    text = to_text(ce_2ec.circuit)
    ce = load_erasure_circuit(from_text(text))
    assert ce.max_r == ce_2ec.max_r
    assert len(ce.segments) == len(ce_2ec.segments)
    assert ce.noise == ce_2ec.noise


def test_data_only_targets(c0):
    ce = compile(c0, NoiseLaw(e=0.01), S_4EC, ec_targets="data")
    spec = get_code("72")
    # ancillas still get their readout checks at D, but no mid-round checks
    anc_segments = [s for s in ce.segments if s.qubit >= 2 * spec.n_cells
                    and s.closed_by == "ec"]
    assert all(s.checkpoint == "D" for s in anc_segments)


def test_idle_noise_flag(c0):
    plain = compile(c0, NoiseLaw(e=0.01), S_4EC)
    idle = compile(c0, NoiseLaw(e=0.01), S_4EC, include_idle_noise=True)
    n_plain = sum(isinstance(i, cir.PauliChannel1) for i in plain.circuit.instructions)
    n_idle = sum(isinstance(i, cir.PauliChannel1) for i in idle.circuit.instructions)
    assert n_idle > n_plain


def test_alternative_2ec_placements(c0):
    for tag, worst in (("ec:A,D", 5), ("ec:C,D", 5)):
        ce = compile(c0, NoiseLaw(e=0.01), get_schedule(tag))
        assert ce.max_r == worst
        assert validate_circuit(ce.circuit) == []


# -- erasure pattern sampling -------------------------------------------------

def test_pattern_zero_noise(c0):
    ce = compile(c0, NoiseLaw(e=0.0), S_4EC)
    log = sample_erasure_pattern(ce, 7)
    assert not log.flags.any()
    assert not log.first_hits.any()


def test_pattern_forced_hit(c0):
    ce = compile(c0, NoiseLaw(e=1.0, gamma=0.0), S_4EC)
    log = sample_erasure_pattern(ce, 7)
    assert (log.first_hits == 1).all()
    assert log.flags.all()


def test_pattern_reproducible(ce_4ec):
    a = sample_erasure_pattern(ce_4ec, 123)
    b = sample_erasure_pattern(ce_4ec, 123)
    assert np.array_equal(a.flags, b.flags)
    assert np.array_equal(a.first_hits, b.first_hits)
    c = sample_erasure_pattern(ce_4ec, 124)
    assert not np.array_equal(a.flags, c.flags)


def test_flag_rate_matches_closed_form(c0):
    """Empirical flag frequency vs the analytic outcome probability, 3 sigma."""
    noise = NoiseLaw(e=0.05, gamma=1.0)
    ce = compile(c0, noise, S_2EC)
    r_vals = sorted({s.r for s in ce.segments})
    counts = {r: [0, 0] for r in r_vals}
    for seed in range(60):
        log = sample_erasure_pattern(ce, 1000 + seed)
        for seg, flag in zip(ce.segments, log.flags):
            counts[seg.r][0] += int(flag)
            counts[seg.r][1] += 1
    for r, (flagged, total) in counts.items():
        expect = ec_outcome_prob(noise.e, noise.q, r)
        sigma = (expect * (1 - expect) / total) ** 0.5
        assert abs(flagged / total - expect) < 3 * sigma, (r, flagged / total, expect)


def test_entries_view(ce_4ec):
    log = sample_erasure_pattern(ce_4ec, 5)
    entries = log.entries(ce_4ec.segments)
    assert len(entries) == int(log.flags.sum())
    for qubit, index, label in entries:
        assert label in ("A", "B", "C", "D")
