"""Tests for the command-line entry point."""

from __future__ import annotations

import json

import pytest
import yaml

from diffusion_functionals.cli import cmd_classify, main
from diffusion_functionals.models import config_from_mapping

UNIT_INTERVAL = {
    "problem": {"l": 0.0, "r": 1.0, "x0": 0.5, "f": "1"},
    "simulation": {"dt": 0.01, "horizon": 10.0, "n_paths": 40, "master_seed": 7, "block_size": 8},
}


def _write(tmp_path, name, data):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(data), encoding="utf-8")
    return path


def _strip_timings(payload):
    payload = dict(payload)
    payload.pop("timings", None)
    return payload


def test_samples_lists_bundled_problems(capsys):
    assert main(["samples", "--json"]) == 0

    listed = json.loads(capsys.readouterr().out)
    assert "bessel3_q3" in listed


def test_classify_sample_prints_json_report(capsys):
    assert main(["classify", "--sample", "bessel3_q3", "--json"]) == 0

    payload = json.loads(capsys.readouterr().out)
    assert payload["subcommand"] == "classify"
    assert payload["status"] == "conclusive"
    assert payload["classifier"]["events"]["on_limit_r"]["kind"] == "finite"
    assert payload["classifier"]["events"]["on_limit_l"]["kind"] == "event_null"
    assert payload["classifier"]["reduction"]["beta"] == "inf"


def test_classify_writes_report_file(tmp_path):
    config = _write(tmp_path, "run.yml", UNIT_INTERVAL)
    out = tmp_path / "reports" / "classify.json"

    assert main(["classify", str(config), "--out", str(out)]) == 0

    payload = json.loads(out.read_text(encoding="utf-8"))
    assert payload["classifier"]["recurrence"]["kind"] == "transient"
    assert payload["config"]["problem"]["x0"] == 0.5


def test_human_summary_mentions_each_event(tmp_path, capsys):
    config = _write(tmp_path, "run.yml", UNIT_INTERVAL)

    main(["classify", str(config)])

    out = capsys.readouterr().out
    assert "on_limit_l: finite" in out
    assert "on_limit_r: finite" in out


def test_invalid_config_exits_with_usage_error(tmp_path, capsys):
    config = _write(tmp_path, "bad.yml", {"problem": {"l": 0.0, "r": 1.0, "x0": 0.5, "f": "x +"}})

    assert main(["classify", str(config), "--json"]) == 1

    captured = capsys.readouterr()
    payload = json.loads(captured.out)
    assert payload["status"] == "error"
    assert payload["exit_code"] == 1
    assert "problem.f" in payload["errors"][0]
    assert "error:" in captured.err


def test_negative_integrand_fails_validation(tmp_path, capsys):
    data = {"problem": {"l": -1.0, "r": 1.0, "x0": 0.0, "f": "x"}}
    config = _write(tmp_path, "negative.yml", data)

    assert main(["classify", str(config), "--json"]) == 1
    assert "f_negative" in json.loads(capsys.readouterr().out)["errors"][0]


def test_unknown_sample_is_a_usage_error(capsys):
    assert main(["classify", "--sample", "missing", "--json"]) == 1
    assert "not found" in json.loads(capsys.readouterr().out)["errors"][0]


def test_missing_config_source_is_a_usage_error():
    with pytest.raises(SystemExit) as info:
        main(["classify"])

    assert info.value.code == 1


def test_bad_thread_count_is_a_usage_error(tmp_path):
    config = _write(tmp_path, "run.yml", UNIT_INTERVAL)

    with pytest.raises(SystemExit) as info:
        main(["verify", str(config), "--threads", "0"])

    assert info.value.code == 1


def test_verify_is_deterministic_across_thread_counts(tmp_path):
    config = _write(tmp_path, "run.yml", UNIT_INTERVAL)
    serial_out = tmp_path / "serial.json"
    threaded_out = tmp_path / "threaded.json"

    serial_code = main(["verify", str(config), "--threads", "1", "--out", str(serial_out)])
    threaded_code = main(["verify", str(config), "--threads", "4", "--out", str(threaded_out)])

    serial = json.loads(serial_out.read_text(encoding="utf-8"))
    threaded = json.loads(threaded_out.read_text(encoding="utf-8"))
    assert serial_code == threaded_code
    assert _strip_timings(serial) == _strip_timings(threaded)
    assert serial["simulation"]["agreement"]["n_paths"] == 40


def test_verify_seed_override_is_echoed(tmp_path):
    config = _write(tmp_path, "run.yml", UNIT_INTERVAL)
    out = tmp_path / "seeded.json"

    main(["verify", str(config), "--seed", "99", "--out", str(out)])

    payload = json.loads(out.read_text(encoding="utf-8"))
    assert payload["config"]["simulation"]["master_seed"] == 99


def test_verify_start_in_d_is_flagged(tmp_path):
    data = {"problem": {"l": -1.0, "r": 1.0, "x0": 0.0, "f": "abs(x)^(-1)"}}
    config = _write(tmp_path, "in_d.yml", data)
    out = tmp_path / "in_d.json"

    assert main(["verify", str(config), "--out", str(out)]) == 2

    payload = json.loads(out.read_text(encoding="utf-8"))
    assert payload["classifier"]["on_start_in_D"] == "zero"
    assert payload["simulation"]["flags"] == ["x0_in_D"]


def test_verify_dumps_paths(tmp_path, monkeypatch):
    data = json.loads(json.dumps(UNIT_INTERVAL))
    data["simulation"]["n_paths"] = 5
    data["output"] = {"dump_paths": True, "dump_dir": str(tmp_path / "paths"), "dump_limit": 3}
    config = _write(tmp_path, "dump.yml", data)
    out = tmp_path / "dump.json"

    import diffusion_functionals.simkit.agreement as agreement_module

    calls = []
    original = agreement_module.simulate_paths

    def counting(*args, **kwargs):
        calls.append(args)
        return original(*args, **kwargs)

    monkeypatch.setattr(agreement_module, "simulate_paths", counting)

    main(["verify", str(config), "--out", str(out)])

    payload = json.loads(out.read_text(encoding="utf-8"))
    assert payload["simulation"]["dumped_paths"] == 3
    assert len(calls) == 1
    assert sorted(p.name for p in (tmp_path / "paths").iterdir()) == [
        "path_00000.csv",
        "path_00001.csv",
        "path_00002.csv",
    ]


def test_identities_small_run_is_underpowered(tmp_path):
    data = {
        "simulation": {"dt": 0.01, "master_seed": 3},
        "identities": {
            "n_paths": 8,
            "max_time": 100.0,
            "fubini_integrands": ["1"],
        },
    }
    config = _write(tmp_path, "identities.yml", data)
    out = tmp_path / "identities.json"

    assert main(["identities", str(config), "--out", str(out)]) == 2

    payload = json.loads(out.read_text(encoding="utf-8"))
    names = [check["name"] for check in payload["identities"]["checks"]]
    assert names == [
        "ray_knight",
        "williams",
        "cherny_p1.5",
        "cherny_p2.5",
        "fubini[1]",
        "occupation",
        "local_time_positivity",
    ]
    assert all(check["underpowered"] for check in payload["identities"]["checks"])


def test_paths_flag_overrides_every_identity_check(tmp_path):
    data = {
        "simulation": {"dt": 0.01, "master_seed": 3},
        "identities": {
            "n_paths": 5000,
            "max_time": 100.0,
            "cherny_paths": 4000,
            "fubini_integrands": ["1"],
        },
    }
    config = _write(tmp_path, "identities.yml", data)
    out = tmp_path / "paths.json"

    assert main(["identities", str(config), "--paths", "10", "--out", str(out)]) == 2

    payload = json.loads(out.read_text(encoding="utf-8"))
    assert payload["config"]["identities"]["n_paths"] == 10
    assert payload["config"]["identities"]["cherny_paths"] is None
    assert all(check["underpowered"] for check in payload["identities"]["checks"])


def test_bad_path_count_is_a_usage_error(tmp_path):
    config = _write(tmp_path, "run.yml", UNIT_INTERVAL)

    with pytest.raises(SystemExit) as info:
        main(["verify", str(config), "--paths", "0"])

    assert info.value.code == 1


def test_schema_subcommand_writes_report_schema(tmp_path):
    out = tmp_path / "schema.json"

    assert main(["schema", "--out", str(out)]) == 0

    schema = json.loads(out.read_text(encoding="utf-8"))
    assert {"subcommand", "status", "exit_code"} <= set(schema["properties"])


def test_cmd_classify_driftless_gbm():
    config = config_from_mapping(
        {"problem": {"l": 0.0, "r": "inf", "x0": 1.0, "mu": "0", "sigma": "x", "f": "1"}}
    )

    report = cmd_classify(config)

    assert report.exit_code == 0
    assert report.classifier.events["on_limit_l"].kind == "infinite"


def test_runs_ledger_round_trip(tmp_path, monkeypatch, capsys):
    import diffusion_functionals.db as db_module

    monkeypatch.setattr(db_module, "get_db_path", lambda: tmp_path / "runs.db")
    db_module._engine = None
    db_module._Session = None
    config = _write(tmp_path, "run.yml", UNIT_INTERVAL)

    assert main(["classify", str(config), "--record", "--label", "unit", "--json"]) == 0
    capsys.readouterr()

    assert main(["runs"]) == 0
    listing = capsys.readouterr().out
    assert "unit" in listing
    run_id = listing.split()[0]

    assert main(["runs", "--show", run_id]) == 0
    shown = json.loads(capsys.readouterr().out)
    assert shown["report"]["subcommand"] == "classify"
    assert main(["runs", "--delete", run_id]) == 0
    assert main(["runs", "--show", run_id]) == 1
    db_module._engine = None
    db_module._Session = None


def test_runs_history_groups_recorded_seeds(tmp_path, monkeypatch, capsys):
    import diffusion_functionals.db as db_module

    monkeypatch.setattr(db_module, "get_db_path", lambda: tmp_path / "history.db")
    db_module._engine = None
    db_module._Session = None
    config = _write(tmp_path, "run.yml", UNIT_INTERVAL)

    for seed in ("5", "6"):
        main(["verify", str(config), "--seed", seed, "--paths", "12", "--record", "--json"])
    main(["classify", "--sample", "bessel3_q3", "--record", "--json"])
    capsys.readouterr()

    assert main(["runs", "--problem", str(config), "--history"]) == 0
    history = json.loads(capsys.readouterr().out)
    assert [entry["master_seed"] for entry in history] == [5, 6]
    assert all(entry["n_paths"] == 12 for entry in history)
    assert set(history[0]["events"]) == {"on_limit_l", "on_limit_r"}

    assert main(["runs", "--sample", "bessel3_q3"]) == 0
    assert len(capsys.readouterr().out.strip().splitlines()) == 1
    assert main(["runs", "--history"]) == 1
    db_module._engine = None
    db_module._Session = None
