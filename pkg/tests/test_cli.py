import json


from uwb_breath.cli import EXIT_DATA, EXIT_MODEL, EXIT_OK, EXIT_USAGE, main


def test_synth_then_eval_clean(tmp_path, capsys):
    data = tmp_path / "d"
    assert main(["synth", "--duration", "120", "--fb", "0.2", "--out", str(data), "--seed", "7"]) == EXIT_OK
    out = tmp_path / "m.json"
    assert main(["eval", "--data", str(data), "--estimator", "highest-peak", "--out", str(out)]) == EXIT_OK
    report = json.loads(out.read_text())
    assert report["pooled"]["n"] == 7
    assert report["pooled"]["mean"] <= 1.0


def test_energy_prints_e30(capsys, tmp_path):
    out = tmp_path / "e.json"
    assert main(["energy", "--scenario", "theoretical_20hz", "--out", str(out)]) == EXIT_OK
    assert "E_30s = 0.345 J" in capsys.readouterr().out
    assert json.loads(out.read_text())["scenario"] == "theoretical_20hz"


def test_energy_config_file(tmp_path, capsys):
    cfg = tmp_path / "s.txt"
    cfg.write_text("mode = practical\nsampling_rate_hz = 4\n")
    assert main(["energy", "--config", str(cfg)]) == EXIT_OK
    assert "E_30s = 3.507 J" in capsys.readouterr().out
    cfg.write_text("wattage = 9\n")
    assert main(["energy", "--config", str(cfg)]) == EXIT_USAGE
    assert "known keys" in capsys.readouterr().err


def test_seed_gives_identical_files(tmp_path):
    for name in ("a", "b"):
        d = tmp_path / name
        assert main(["synth", "--persons", "2", "--setups", "2", "--per-pair", "1", "--duration", "30",
                     "--out", str(d), "--seed", "7"]) == EXIT_OK
        assert main(["eval", "--data", str(d), "--out", str(d / "metrics.json")]) == EXIT_OK
    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert files == sorted(p.name for p in (tmp_path / "b").iterdir())
    for f in files:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_train_quantize_eval_sweep(tmp_path, capsys):
    data = tmp_path / "d"
    assert main(["synth", "--persons", "3", "--setups", "2", "--per-pair", "1", "--duration", "60",
                 "--out", str(data), "--seed", "1"]) == EXIT_OK
    model = tmp_path / "m.uwbm"
    qmodel = tmp_path / "q.uwbm"
    assert main(["train", "--data", str(data), "--out", str(model), "--epochs", "2", "--replicates", "1"]) == EXIT_OK
    assert main(["quantize", "--model", str(model), "--data", str(data), "--out", str(qmodel)]) == EXIT_OK
    summary = json.loads(qmodel.with_suffix(".json").read_text())
    assert summary["size_ratio"] <= 0.36
    for m in (model, qmodel):
        assert main(["eval", "--data", str(data), "--estimator", "cnn", "--model", str(m)]) == EXIT_OK
    assert main(["preprocess", "--data", str(data), "--out", str(tmp_path / "p.json")]) == EXIT_OK
    assert json.loads((tmp_path / "p.json").read_text())["n_windows"] == 18
    sweep = tmp_path / "s.csv"
    assert main(["sweep", "--data", str(data), "--rates", "77.5,20", "--out", str(sweep)]) == EXIT_OK
    assert len(sweep.read_text().splitlines()) == 3


def test_exit_codes(tmp_path, capsys):
    assert main(["eval", "--data", str(tmp_path / "missing")]) == EXIT_DATA
    assert main(["frobnicate"]) == EXIT_USAGE
    assert main(["eval", "--data", str(tmp_path), "--bogus-flag"]) == EXIT_USAGE
    bad = tmp_path / "bad.uwbc"
    bad.write_bytes(b"UWBC\x01")
    assert main(["eval", "--data", str(bad)]) == EXIT_DATA
    junk = tmp_path / "junk.uwbm"
    junk.write_bytes(b"nonsense" * 4)
    (tmp_path / "d").mkdir()
    main(["synth", "--fb", "0.2", "--duration", "30", "--out", str(tmp_path / "d")])
    assert main(["eval", "--data", str(tmp_path / "d"), "--estimator", "cnn", "--model", str(junk)]) == EXIT_MODEL
    assert main(["sweep", "--data", str(tmp_path / "d"), "--rates", "0.5", "--out", str(tmp_path / "s.csv")]) == EXIT_USAGE
    cfg = tmp_path / "t.txt"
    cfg.write_text("epochs = many\n")
    assert main(["train", "--data", str(tmp_path / "d"), "--out", str(junk), "--config", str(cfg)]) == EXIT_USAGE
