import json

from superlab.cli import main


def test_verify_fast_single_criterion(tmp_path, capsys):
    rc = main(["verify", "--tier", "fast", "--only", "1",
               "--out", str(tmp_path / "v")])
    assert rc == 0
    report = json.loads((tmp_path / "v" / "report.json").read_text())
    assert report["overall"] == "pass"
    ids = [c["id"] for c in report["criteria"]]
    assert ids == list(range(1, 15))
    skipped = [c for c in report["criteria"] if c["skipped"]]
    assert all(c["reason"] for c in skipped)  # never silently skipped


def test_pde_writes_positive_constant(tmp_path):
    rc = main(["pde", "--out", str(tmp_path / "p")])
    assert rc == 0
    payload = json.loads((tmp_path / "p" / "constants.json").read_text())
    assert payload["c_beta_d"] > 0
    manifest = json.loads((tmp_path / "p" / "manifest.json").read_text())
    assert "seed" in manifest["options"]
    assert "rng" in manifest


def test_simulate_deterministic_outputs(tmp_path):
    args = ["simulate", "--mass-scale", "500", "--times", "0.2",
            "--seed", "3"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    csv_a = (tmp_path / "a" / "snapshots").glob("*.csv")
    for pa in csv_a:
        pb = tmp_path / "b" / "snapshots" / pa.name
        assert pa.read_bytes() == pb.read_bytes()


def test_config_file_with_flag_override(tmp_path):
    cfg = tmp_path / "cfg.toml"
    cfg.write_text('mass_scale = 400\nseed = 5\nh = 0.1\nreps = 200\n')
    out = tmp_path / "c"
    rc = main(["cluster", "--config", str(cfg), "--reps", "300",
               "--out", str(out)])
    assert rc == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["options"]["mass_scale"] == 400  # from config
    assert manifest["options"]["reps"] == 300  # flag wins
    payload = json.loads((out / "report.json").read_text())
    assert payload["reps"] == 300


def test_report_renders_run(tmp_path, capsys):
    out = tmp_path / "p"
    main(["pde", "--out", str(out)])
    capsys.readouterr()
    rc = main(["report", str(out)])
    assert rc == 0
    text = capsys.readouterr().out
    assert "c_beta_d" in text and "rng" in text


def test_report_missing_manifest_is_usage_error(tmp_path, capsys):
    empty = tmp_path / "nothing"
    empty.mkdir()
    rc = main(["report", str(empty)])
    assert rc == 2


def test_bad_params_exit_2(capsys):
    rc = main(["simulate", "--d", "2", "--out", "/tmp/should-not-exist-x"])
    assert rc == 2
