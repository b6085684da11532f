import pytest

from dappbench.scenario import (
    ParseError,
    ValidationError,
    load_scenario,
    parse_scenario,
    serialize_scenario,
)
from dappbench.scenarios import scenario_path, shipped_scenarios
from dappbench.transport import TransportVariant
from dappbench.workloads import DappKind

MINIMAL = """
{
  "name": "tiny",
  "seed": 3,
  "instances": [{"kind": "EBS"}]
}
"""


class TestParsing:
    def test_minimal_scenario_gets_defaults(self):
        scenario = parse_scenario(MINIMAL)
        assert scenario.name == "tiny"
        assert len(scenario.arms) == 1
        group = scenario.arms[0].groups[0]
        assert group.kind is DappKind.EBS
        assert group.count == 1
        assert group.deadline_ns == 10_000_000
        assert group.slots == 300
        assert group.samples == 1536
        assert group.period_ms == 10.0
        assert group.transport.variant is TransportVariant.INPROCESS
        assert scenario.workload.model_seed == 3  # defaults to the seed

    def test_bad_json_reports_line(self):
        with pytest.raises(ParseError) as err:
            parse_scenario('{"name": "x",\n  "seed": }', source="broken.json")
        assert "broken.json:2" in str(err.value)

    def test_missing_name(self):
        with pytest.raises(ParseError):
            parse_scenario('{"seed": 1, "instances": [{"kind": "EBS"}]}')

    def test_wrong_field_type(self):
        with pytest.raises(ParseError):
            parse_scenario('{"name": "x", "seed": "nope", "instances": [{"kind": "EBS"}]}')

    def test_arms_and_instances_are_exclusive(self):
        doc = '{"name": "x", "seed": 1, "instances": [{"kind": "EBS"}], "arms": []}'
        with pytest.raises(ParseError):
            parse_scenario(doc)


class TestValidation:
    def test_zero_slots_rejected(self):
        doc = '{"name": "x", "seed": 1, "instances": [{"kind": "EBS", "slots": 0}]}'
        with pytest.raises(ValidationError) as err:
            parse_scenario(doc)
        assert "slots" in str(err.value)

    def test_unknown_kind(self):
        doc = '{"name": "x", "seed": 1, "instances": [{"kind": "QUANTUM"}]}'
        with pytest.raises(ValidationError):
            parse_scenario(doc)

    def test_unknown_transport(self):
        doc = '{"name": "x", "seed": 1, "instances": [{"kind": "EBS", "transport": "warp"}]}'
        with pytest.raises(ValidationError):
            parse_scenario(doc)

    def test_delayed_stream_needs_delay(self):
        doc = '{"name": "x", "seed": 1, "instances": [{"kind": "EBS", "transport": "delayed_stream"}]}'
        with pytest.raises(ValidationError):
            parse_scenario(doc)

    def test_interferer_bin_must_fit_slot(self):
        doc = (
            '{"name": "x", "seed": 1, '
            '"sim": {"interferer": {"channel": 0, "bin": 2000, "amplitude": 1.0}}, '
            '"instances": [{"kind": "EBS"}]}'
        )
        with pytest.raises(ValidationError) as err:
            parse_scenario(doc)
        assert "bin" in str(err.value)

    def test_initial_channel_range(self):
        doc = (
            '{"name": "x", "seed": 1, "sim": {"num_channels": 2, "initial_channel": 2}, '
            '"instances": [{"kind": "EBS"}]}'
        )
        with pytest.raises(ValidationError):
            parse_scenario(doc)

    def test_duplicate_arm_names(self):
        doc = (
            '{"name": "x", "seed": 1, "arms": ['
            '{"name": "a", "instances": [{"kind": "EBS"}]},'
            '{"name": "a", "instances": [{"kind": "FFT"}]}]}'
        )
        with pytest.raises(ValidationError):
            parse_scenario(doc)


class TestRoundTrip:
    def test_serialize_then_parse_is_equal(self):
        scenario = parse_scenario(MINIMAL)
        again = parse_scenario(serialize_scenario(scenario))
        assert again == scenario

    def test_shipped_scenarios_round_trip(self):
        for name in shipped_scenarios():
            scenario = load_scenario(scenario_path(name))
            assert parse_scenario(serialize_scenario(scenario)) == scenario


def test_shipped_scenarios_exist():
    names = shipped_scenarios()
    assert "rq1_colocated_vs_separated" in names
    assert "rq2_oversubscription" in names
    assert "rq3_offload_sweep" in names
    assert "smoke" in names


def test_sweep_scenario_fleet_shape():
    scenario = load_scenario(scenario_path("rq3_offload_sweep"))
    assert [arm.x for arm in scenario.arms] == [0, 3, 6, 9, 12]
    for arm in scenario.arms:
        counts = {}
        offloaded = 0
        for group in arm.groups:
            counts[group.kind] = counts.get(group.kind, 0) + group.count
            if group.transport.variant is TransportVariant.DIRECT_CAPTURE:
                offloaded += group.count
        assert sum(counts.values()) == 16
        assert counts[DappKind.XCEPTION_LITE] == 4
        assert offloaded == arm.x
