import pytest
from hypothesis import given, settings, strategies as st

from spikesim.events import TopologyError
from spikesim.neuron import NeuronParams
from spikesim.topology import (MappingSpec, NetworkSpec, attach_synapses,
                               build_post_tables, generate_random,
                               load_mapping, load_network, load_stimuli,
                               save_mapping, save_network, save_stimuli,
                               validate)


def small_net():
    net = NetworkSpec()
    for nid in (1, 2, 3):
        net.neurons[nid] = NeuronParams(threshold=1.0, tau=10.0)
    net.synapses = [(1, 2, 0.5, 2), (2, 3, -0.25, 1), (1, 3, 0.75, 4)]
    net.inputs = {1}
    net.outputs = {3}
    attach_synapses(net)
    return net


def test_file_round_trip(tmp_path):
    net = small_net()
    mapping = MappingSpec(assignment={1: 1, 2: 2, 3: 1}, procs=2)
    stimuli = {0: [1], 7: [1]}
    save_network(net, str(tmp_path / "a.net"))
    save_mapping(mapping, str(tmp_path / "a.map"))
    save_stimuli(stimuli, str(tmp_path / "a.stim"))
    net2 = load_network(str(tmp_path / "a.net"))
    mapping2 = load_mapping(str(tmp_path / "a.map"))
    stimuli2 = load_stimuli(str(tmp_path / "a.stim"))
    assert net2.synapses == net.synapses
    assert set(net2.neurons) == set(net.neurons)
    assert (net2.inputs, net2.outputs) == (net.inputs, net.outputs)
    assert mapping2.assignment == mapping.assignment
    assert mapping2.procs == 2
    assert stimuli2 == stimuli


def test_validate_accepts_consistent_spec():
    report = validate(small_net(), MappingSpec({1: 1, 2: 1, 3: 2}, procs=2))
    assert report.ok
    assert report.d_min == {1: 1, 2: 2, 3: 1}


def test_validate_rejects_zero_delay():
    net = small_net()
    net.synapses.append((2, 1, 0.5, 0))
    report = validate(net, MappingSpec({1: 1, 2: 1, 3: 1}, procs=1))
    assert any("delay" in v for v in report.violations)


def test_validate_rejects_unknown_endpoints_and_unmapped():
    net = small_net()
    net.synapses.append((9, 2, 0.5, 1))
    report = validate(net, MappingSpec({1: 1, 2: 1}, procs=1))
    assert any("unknown source" in v for v in report.violations)
    assert any("unmapped" in v for v in report.violations)


def test_validate_rejects_environment_assignment():
    report = validate(small_net(), MappingSpec({1: 0, 2: 1, 3: 1}, procs=1))
    assert any("0 is the environment" in v for v in report.violations)


def test_validate_flags_unreachable_output():
    net = small_net()
    net.synapses = [(1, 2, 0.5, 2)]
    attach_synapses(net)
    report = validate(net, MappingSpec({1: 1, 2: 1, 3: 1}, procs=1))
    assert any("unreachable" in v for v in report.violations)


def test_post_tables_partition_synapses_exactly():
    net = small_net()
    mapping = MappingSpec({1: 1, 2: 2, 3: 1}, procs=2)
    tables = build_post_tables(net, mapping)
    flat = [(src, dst) for per in tables.values()
            for src, targets in per.items() for dst, _owner in targets]
    assert sorted(flat) == sorted((s, d) for s, d, _w, _dl in net.synapses)
    for per in tables.values():
        for src, targets in per.items():
            for dst, owner in targets:
                assert owner == mapping.assignment[dst]
    # Every neuron owned, even if it has no outgoing synapses.
    assert set(tables[1]) == {1, 3}
    assert set(tables[2]) == {2}


def test_attach_synapses_materializes_weights_at_target():
    net = small_net()
    assert net.neurons[3].synapses[2].weight == -0.25
    assert net.neurons[3].synapses[1].delay == 4
    assert net.neurons[1].is_input


def test_duplicate_synapse_rejected():
    net = small_net()
    net.synapses.append((1, 2, 0.1, 3))
    with pytest.raises(TopologyError):
        attach_synapses(net)


def test_generator_is_deterministic():
    a = generate_random(seed=11, n=20, prob=0.1, procs=3)
    b = generate_random(seed=11, n=20, prob=0.1, procs=3)
    assert a[0].synapses == b[0].synapses
    assert a[1].assignment == b[1].assignment
    assert a[2] == b[2]


def test_generator_output_validates():
    net, mapping, _ = generate_random(seed=5, n=64, prob=0.1, procs=4)
    report = validate(net, mapping)
    assert report.ok, report.violations[:3]
    assert set(mapping.assignment.values()) == {1, 2, 3, 4}


def test_generator_zero_probability_has_no_synapses():
    net, _, _ = generate_random(seed=5, n=16, prob=0.0, procs=2)
    assert net.synapses == []


def test_generator_forces_inhibition_and_delay_spread():
    net, _, _ = generate_random(seed=5, n=32, prob=0.1, procs=2)
    weights = [w for _s, _d, w, _dl in net.synapses]
    delays = [dl for _s, _d, _w, dl in net.synapses]
    assert any(w < 0 for w in weights)
    assert max(delays) - min(delays) >= 2


def test_parse_errors_carry_location(tmp_path):
    path = tmp_path / "bad.net"
    path.write_text("neuron 1 theta 1.0 tau 10\nsynapse 1\n")
    with pytest.raises(TopologyError, match="bad.net:2"):
        load_network(str(path))


def test_negative_stimulus_time_rejected(tmp_path):
    path = tmp_path / "bad.stim"
    path.write_text("stim 1 -2\n")
    with pytest.raises(TopologyError):
        load_stimuli(str(path))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), procs=st.integers(1, 6))
def test_generator_mapping_covers_all_neurons(seed, procs):
    net, mapping, _ = generate_random(seed=seed, n=12, prob=0.15, procs=procs)
    assert set(mapping.assignment) == set(net.neurons)
    assert all(1 <= p <= procs for p in mapping.assignment.values())
