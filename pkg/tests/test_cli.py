import json

import pytest

from discia.cli import main

CONFIG = {
    "channel": {"num_users": 2, "snr_db": 12.0, "alpha": 0.9, "theta_policy": "random"},
    "alphabet": 4,
    "algorithms": ["maxsinr_linear", "disc_maxsinr", "disc_maxsinr_plus", "plus_U", "plus_D"],
    "maxsinr": {"num_runs": 2, "max_iters": 20},
    "train": {"batch_size": 64, "epochs": 3, "learning_rate": 0.01},
    "eval_samples": 200,
    "num_channels": 2,
    "theta_grid": [0.5, 1.0],
}


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(CONFIG))
    return str(path)


def run_all(out, config):
    """Every subcommand once; returns the data files written."""
    out.mkdir()
    bf = str(out / "bf.json")
    main(["maxsinr", "--out", bf, "--runs", "2", "--iters", "20", "--seed", "3"])
    main(["eval", "--out", str(out / "disc.csv"), "--encoders", bf, "--samples", "300", "--seed", "1"])
    main(["eval", "--out", str(out / "lin.csv"), "--encoders", bf, "--samples", "300",
          "--algorithm", "maxsinr_linear"])
    ckpt = str(out / "ckpt.json")
    main(["train", "--out", ckpt, "--beamformers", bf, "--config", config, "--seed", "2",
          "--history", str(out / "hist.csv"), "-M", "8"])
    main(["eval", "--out", str(out / "plus.csv"), "--encoders", ckpt, "--samples", "300"])
    main(["sweep", "--out", str(out / "sweep.csv"), "--config", config, "--seed", "4"])
    main(["cdf", "--out", str(out / "cdf.csv"), "--config", config])
    main(["ablate", "uniform", "--out", str(out / "u.json"), "--checkpoint", ckpt])
    main(["ablate", "fixedpam", "--out", str(out / "d.json"), "--checkpoint", ckpt])
    main(["ablate", "pretrain", "--out", str(out / "pre.csv"), "--config", config])
    main(["export-constellation", "--out", str(out / "const.json"), "--encoders", ckpt])
    return sorted(p for p in out.iterdir() if p.suffix in (".csv", ".json"))


@pytest.mark.slow
def test_every_subcommand_is_byte_identical(tmp_path, config, capsys):
    a = run_all(tmp_path / "a", config)
    b = run_all(tmp_path / "b", config)
    assert [p.name for p in a] == [p.name for p in b]
    assert len(a) >= 16
    for x, y in zip(a, b):
        assert x.read_bytes() == y.read_bytes(), x.name
    for fig in ("hist.png", "sweep.png", "cdf.png", "pre.png", "const.png"):
        assert (tmp_path / "a" / fig).stat().st_size > 0
    assert "sumrate" in capsys.readouterr().out


def test_output_headers(tmp_path, config):
    bf = str(tmp_path / "bf.json")
    main(["maxsinr", "--out", bf, "--runs", "1", "--iters", "10"])
    assert set(json.loads((tmp_path / "bf.json").read_text())) == {"V", "U", "P"}
    main(["eval", "--out", str(tmp_path / "e.csv"), "--encoders", bf, "--samples", "100"])
    lines = (tmp_path / "e.csv").read_text().splitlines()
    assert lines[0] == "user,rate_bits" and len(lines) == 4
    report = json.loads((tmp_path / "e.json").read_text())
    assert len(report["transition_matrices"]) == 3
    main(["sweep", "--out", str(tmp_path / "s.csv"), "--config", config, "--no-figures"])
    assert (tmp_path / "s.csv").read_text().startswith("theta_rad,algorithm,sumrate_bits\n")
    assert not (tmp_path / "s.png").exists()


def test_custom_channel_file(tmp_path):
    ch = tmp_path / "ch.json"
    ch.write_text(json.dumps({"K": 2, "n": 2, "snr_db": 6.0, "alpha": 0.5,
                              "theta_deg": [[0, 30], [-30, 0]]}))
    main(["maxsinr", "--out", str(tmp_path / "bf.json"), "--channel", str(ch), "--runs", "1"])
    assert len(json.loads((tmp_path / "bf.json").read_text())["V"]) == 2


def test_linear_eval_needs_beamformers(tmp_path):
    ckpt = tmp_path / "c.json"
    ckpt.write_text(json.dumps({"users": [{"constellation": [-1, 1], "v": [1, 0], "p": 1, "beta": 1}] * 3}))
    with pytest.raises(SystemExit):
        main(["eval", "--out", str(tmp_path / "e.csv"), "--encoders", str(ckpt), "-M", "2",
              "--algorithm", "maxsinr_linear"])


def test_ablate_needs_checkpoint(tmp_path):
    with pytest.raises(SystemExit):
        main(["ablate", "uniform", "--out", str(tmp_path / "u.json")])
