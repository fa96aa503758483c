"""Scenario parsing and validation, preset expansion, golden configs, CLI."""
import json
import os
import subprocess
import sys

import pytest

from sdnsim.presets import PRESET_IDS, case_group, preset
from sdnsim.scenario import ScenarioError, from_dict, load_scenario

GOLDEN_DIR = os.path.join(os.path.dirname(__file__), "golden")


def minimal_tree(**overrides):
    tree = {
        "name": "mini",
        "topology": {
            "switches": ["S1", "S2"],
            "hosts": [{"id": "a", "switch": "S1"}, {"id": "b", "switch": "S2"}],
            "links": [{"a": "S1", "b": "S2"}],
        },
        "strategy": "restoration",
        "cbr_flows": [{"name": "f", "src": "a", "dst": "b", "rate_bps": 1e6,
                       "start_us": 0, "stop_us": 1_000_000}],
        "run": {"seed": 1, "duration_us": 2_000_000},
    }
    tree.update(overrides)
    return tree


def test_minimal_scenario_parses_and_runs():
    from sdnsim.runner import run_scenario
    cfg = from_dict(minimal_tree())
    result = run_scenario(cfg)
    assert result.flows["f"]["received"] > 0


def test_unknown_keys_rejected_with_location():
    with pytest.raises(ScenarioError) as e:
        from_dict(minimal_tree(bogus=1))
    assert "bogus" in str(e.value)


def test_bfd_session_must_reference_existing_link():
    tree = minimal_tree(bfd=[{"link": ["S1", "S9"], "t_i_us": 5000, "m": 2}])
    with pytest.raises(ScenarioError) as e:
        from_dict(tree)
    assert "S1-S9" in str(e.value)


def test_failure_must_reference_existing_link_and_mode():
    tree = minimal_tree(failures=[{"link": ["S1", "S2"], "mode": "sawzall",
                                   "at_us": 1}])
    with pytest.raises(ScenarioError) as e:
        from_dict(tree)
    assert "sawzall" in str(e.value)


def test_flow_host_must_exist():
    tree = minimal_tree()
    tree["cbr_flows"][0]["src"] = "ghost"
    with pytest.raises(ScenarioError) as e:
        from_dict(tree)
    assert "ghost" in str(e.value)


def test_zero_rate_rejected_at_parse():
    tree = minimal_tree()
    tree["cbr_flows"][0]["rate_bps"] = 0
    with pytest.raises(ScenarioError):
        from_dict(tree)


def test_non_failover_group_types_rejected():
    for gt in ("all", "select", "indirect"):
        with pytest.raises(ScenarioError) as e:
            from_dict(minimal_tree(group_type=gt))
        assert gt in str(e.value)


def test_invalid_bfd_interval_rejected():
    tree = minimal_tree(bfd=[{"link": ["S1", "S2"], "t_i_us": 0, "m": 2}])
    with pytest.raises(ScenarioError):
        from_dict(tree)


def test_roundtrip_through_json(tmp_path):
    cfg = from_dict(minimal_tree())
    path = tmp_path / "scenario.json"
    path.write_text(cfg.to_json())
    again = load_scenario(str(path))
    assert again.to_dict() == cfg.to_dict()


def test_invalid_json_reports_path(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{nope")
    with pytest.raises(ScenarioError):
        load_scenario(str(path))


# -- presets ------------------------------------------------------------------------

def test_every_preset_expands_and_validates():
    for pid in PRESET_IDS:
        cases = preset(pid, seeds=[1])
        assert cases
        for name, cfg in cases:
            cfg.validate()
            assert cfg.to_dict()["run"]["seed"] == 1


def test_unknown_preset_rejected():
    with pytest.raises(ValueError):
        preset("fig99_nope")


def test_congestion_factorial_shape():
    cases = preset("congestion_factorial")
    assert len(cases) == 18 * 6  # 18 cases x 6 repetitions
    groups = {case_group(n) for n, _ in cases}
    assert len(groups) == 18


def test_fig12_maps_detection_times_to_interval_third():
    for name, cfg in preset("fig12_bfd_sweep", seeds=[1]):
        (b,) = cfg.bfd
        detect = int(name.split("_td")[1].split("ms")[0]) * 1000
        assert b.multiplier == 2
        assert b.tx_interval_us == detect // 3


def test_presets_match_golden_copies():
    for pid in PRESET_IDS:
        golden_path = os.path.join(GOLDEN_DIR, f"{pid}.json")
        with open(golden_path, "r", encoding="utf-8") as fh:
            golden = json.load(fh)
        got = {name: cfg.to_dict() for name, cfg in preset(pid, seeds=[1])}
        assert got == golden, f"preset {pid} deviates from its golden copy"


def test_case_group_strips_seed():
    assert case_group("fig9_dpqoap_seed3") == "fig9_dpqoap"
    assert case_group("no_seed_suffix") == "no_seed_suffix"


# -- CLI ----------------------------------------------------------------------------

def _run_cli(*args, env=None):
    e = dict(os.environ)
    e.update(env or {})
    return subprocess.run([sys.executable, "-m", "sdnsim.cli", *args],
                          capture_output=True, text=True, env=e)


def test_cli_list_presets():
    out = _run_cli("list-presets")
    assert out.returncode == 0
    assert set(PRESET_IDS) <= set(out.stdout.split())


def test_cli_run_scenario(tmp_path):
    scen = tmp_path / "mini.json"
    scen.write_text(json.dumps(minimal_tree()))
    out = _run_cli("run", "--scenario", str(scen), "--out", str(tmp_path / "o"))
    assert out.returncode == 0
    assert (tmp_path / "o" / "mini_timeseries.csv").exists()


def test_cli_validation_error_exit_code(tmp_path):
    scen = tmp_path / "bad.json"
    scen.write_text(json.dumps(minimal_tree(bogus=1)))
    out = _run_cli("run", "--scenario", str(scen), "--out", str(tmp_path / "o"))
    assert out.returncode == 2
    assert "bogus" in out.stderr


def test_cli_env_overrides(tmp_path):
    scen = tmp_path / "mini.json"
    scen.write_text(json.dumps(minimal_tree()))
    out = _run_cli("run", env={"SDNSIM_SCENARIO": str(scen),
                               "SDNSIM_OUT": str(tmp_path / "envout"),
                               "SDNSIM_SEED": "7"})
    assert out.returncode == 0
    ts = (tmp_path / "envout" / "mini_timeseries.csv").read_text()
    assert '"seed": 7' in ts or '"seed":7' in ts


def test_conservation_gate_raises_with_diagnostics():
    from sdnsim.runner import ConservationError, Simulation
    sim = Simulation(from_dict(minimal_tree()))
    result = sim.run()
    result.conservation["emitted"] += 3  # corrupt the captured ledger
    with pytest.raises(ConservationError) as e:
        sim._verify_conservation(result)
    assert "conservation" in str(e.value)
