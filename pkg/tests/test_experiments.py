import json
import math

import numpy as np
import pytest

from discia.channel_model import ChannelConfig, ChannelSet, build_channel_set, median_channel_config
from discia.discrete_link import SystemEncoders, pam_constellation, sumrate_eval
from discia.experiments import (
    ALGORITHMS, ExperimentConfig, ablation_fixed_pam, ablation_uniformize, derive_seed,
    empirical_cdf, eval_maxsinr_linear, evaluate_channel, export_constellation, pretrain_ablation,
    rows_to_json, run_asymmetric_cdf, sample_channels, sweep_symmetric, write_csv,
)
from discia.learned_encoder import EncoderParams, TrainConfig, random_init
from discia.maxsinr import MaxSinrConfig, run_maxsinr


def tiny(**kw):
    base = dict(
        channel=ChannelConfig(2, 12.0, 0.9, "random"),
        alphabet=4,
        algorithms=ALGORITHMS,
        maxsinr=MaxSinrConfig(num_runs=2, max_iters=20),
        train=TrainConfig(batch_size=64, epochs=3, learning_rate=1e-2),
        eval_samples=200,
        num_channels=3,
        seed=1,
    )
    base.update(kw)
    return ExperimentConfig(**base)


class TestSeeds:
    def test_stable_and_distinct(self):
        assert derive_seed(0, 1, 2) == derive_seed(0, 1, 2)
        assert len({derive_seed(0, t, c) for t in range(5) for c in range(10)}) == 50
        assert 0 <= derive_seed(7) < 2**32


class TestConfig:
    def test_roundtrip(self):
        cfg = tiny()
        again = ExperimentConfig.from_dict(cfg.to_dict())
        assert again.to_dict() == cfg.to_dict()

    def test_median_default(self):
        cfg = ExperimentConfig.from_dict({"alphabet": 8})
        assert cfg.channel.snr_db == 18.0
        assert cfg.channel.theta_policy == "fixed"

    def test_channel_file(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"K": 2, "n": 2, "snr_db": 6.0, "alpha": 0.5,
                                    "theta_deg": [[0, 30], [-30, 0]]}))
        cfg = ExperimentConfig.from_dict({"channel_file": str(path)})
        assert cfg.channel.num_users == 2
        np.testing.assert_allclose(np.asarray(cfg.channel.theta)[0, 1], math.pi / 6)

    def test_validation(self):
        with pytest.raises(ValueError):
            tiny(algorithms=("nope",))
        with pytest.raises(ValueError):
            tiny(alphabet=3)
        with pytest.raises(ValueError):
            tiny(eval_samples=0)


class TestAblations:
    def test_uniformize_clusters(self):
        params = EncoderParams([[0.1, 0.12, 1.0, 1.01]], [[1.0, 0.0]], [0.7], [5.0])
        out = ablation_uniformize(params, 0.05)
        want = np.repeat([-3.0, -1.0, 1.0, 3.0], 2) / math.sqrt(5)
        np.testing.assert_allclose(out.constellation()[0], want, atol=1e-12)
        assert out.p[0] == 0.7
        np.testing.assert_array_equal(out.v, params.v)

    def test_uniformize_keeps_pam(self):
        half = pam_constellation(8)[4:]
        params = EncoderParams([half, half * 2], [[1.0, 0.0], [0.0, 1.0]], [1.0, 1.0], [1.0, 1.0])
        out = ablation_uniformize(params, 0.05)
        np.testing.assert_allclose(out.constellation(), np.tile(pam_constellation(8), (2, 1)),
                                   atol=1e-12)

    def test_uniformize_unit_power_and_order(self):
        params = random_init(3, 8, 2, 4)
        out = ablation_uniformize(params, 0.05)
        c = out.constellation()
        np.testing.assert_allclose(np.mean(c**2, axis=1), 1.0, atol=1e-12)
        for i in range(3):
            src = params.constellation()[i]
            assert np.all(np.diff(c[i][np.argsort(src, kind="stable")]) >= 0)

    def test_uniformize_rejects_total_merge(self):
        params = EncoderParams([[0.5]], [[1.0, 0.0]], [1.0], [1.0])
        with pytest.raises(ValueError):
            ablation_uniformize(params, 5.0)
        with pytest.raises(ValueError):
            ablation_uniformize(params, 0.0)

    def test_fixed_pam(self):
        params = random_init(3, 8, 2, 2)
        params.p = np.array([0.2, 0.5, 1.0])
        out = ablation_fixed_pam(params)
        np.testing.assert_array_equal(out.constellation(), np.tile(pam_constellation(8), (3, 1)))
        np.testing.assert_array_equal(out.v, params.v)
        np.testing.assert_array_equal(out.p, params.p)


class TestEvaluateChannel:
    def test_untrained_plus_equals_disc(self):
        cfg = tiny(train=TrainConfig(batch_size=32, epochs=2, learning_rate=0.0))
        ch = build_channel_set(cfg.channel, 3)
        rows, art = evaluate_channel(ch, cfg, 0)
        by = {r.algorithm: r.sumrate for r in rows}
        assert [r.algorithm for r in rows] == list(ALGORITHMS)
        assert by["disc_maxsinr_plus"] == by["disc_maxsinr"]
        assert by["plus_D"] == by["disc_maxsinr"]
        assert by["plus_U"] == by["disc_maxsinr"]
        assert set(art) >= {"beamformers", "trained", "history"}

    def test_subset(self):
        cfg = tiny(algorithms=("disc_maxsinr",))
        rows, art = evaluate_channel(build_channel_set(cfg.channel, 0), cfg, 0)
        assert [r.algorithm for r in rows] == ["disc_maxsinr"]
        assert "trained" not in art


class TestLinearReceiver:
    def test_single_user_high_snr(self):
        ch = ChannelSet(np.eye(2)[None, None], 1e-4)
        row = eval_maxsinr_linear(ch, run_maxsinr(ch, MaxSinrConfig(num_runs=1)), 8, 2000, 0)
        assert row.sumrate == pytest.approx(3.0, abs=1e-9)

    def test_orthogonal_weak_interference_is_near_decoupled(self):
        cfg = tiny(channel=ChannelConfig(3, 12.0, 0.2, "symmetric", math.pi / 2),
                   algorithms=("maxsinr_linear", "disc_maxsinr"), eval_samples=5000)
        ch = build_channel_set(cfg.channel)
        rows, art = evaluate_channel(ch, cfg, 0)
        H = ch.H.copy()
        for i in range(3):
            for j in range(3):
                if i != j:
                    H[i, j] = 0
        enc = SystemEncoders.from_beamformers(art["beamformers"], 4)
        _, alone = sumrate_eval(enc, ChannelSet(H, ch.sigma2), 5000, 0)
        for r in rows:
            assert r.sumrate == pytest.approx(alone, abs=0.15)


class TestStudies:
    def test_empirical_cdf(self):
        x, p = empirical_cdf([3.0, 1.0, 2.0, 2.0])
        np.testing.assert_array_equal(x, [1, 2, 2, 3])
        np.testing.assert_array_equal(p, [0.25, 0.5, 0.75, 1.0])

    def test_sample_channels(self):
        chans = sample_channels(tiny())
        assert len(chans) == 3
        assert len({s for s, _ in chans}) == 3
        assert chans[0][1] == sample_channels(tiny())[0][1]

    def test_cdf_rows_valid(self):
        cdf, rows = run_asymmetric_cdf(tiny())
        assert len(rows) == 3 * len(ALGORITHMS)
        for alg in ALGORITHMS:
            xs = [s for s, _, a in cdf if a == alg]
            ps = [c for _, c, a in cdf if a == alg]
            assert len(xs) == 3
            assert np.all(np.diff(xs) >= 0) and np.all(np.diff(ps) > 0)
            assert ps[-1] == 1.0
            assert all(0 <= s <= 2 * math.log2(4) for s in xs)

    def test_sweep(self):
        cfg = tiny(algorithms=("maxsinr_linear", "disc_maxsinr"))
        curve, rows = sweep_symmetric(cfg, theta_grid=(math.pi / 12, math.pi / 2))
        assert len(curve) == 4 == len(rows)
        assert {t for t, _, _ in curve} == {math.pi / 12, math.pi / 2}
        with pytest.raises(ValueError):
            sweep_symmetric(cfg, theta_grid=(0.0,))

    def test_pretrain_pairs_equal_budget(self):
        pairs = pretrain_ablation(tiny(train=TrainConfig(batch_size=64, epochs=4, early_stop=True,
                                                         early_stop_window=1)))
        assert len(pairs) == 3
        assert all(p.pretrained_epochs == p.random_epochs == 4 for p in pairs)


class TestOutputs:
    def test_export_cardinality(self, tmp_path):
        cfg = median_channel_config()
        ch = build_channel_set(cfg)
        enc = random_init(3, 8, 2, 0).to_system()
        recs = export_constellation(enc, ch, tmp_path / "c.json", figure=tmp_path / "c.png")
        assert len(recs) == 3 * 3 * 8
        assert json.loads((tmp_path / "c.json").read_text()) == recs
        assert (tmp_path / "c.png").stat().st_size > 0
        X = enc.transmit_points()
        r = next(x for x in recs if (x["receiver"], x["user"], x["message"]) == (1, 2, 5))
        np.testing.assert_allclose(r["y"], ch.H[1, 2] @ X[2, 5])

    def test_csv_repr_floats(self, tmp_path):
        write_csv(tmp_path / "a.csv", ["x", "y"], [(0.1, "a"), (np.float64(1 / 3), 2)])
        lines = (tmp_path / "a.csv").read_text().splitlines()
        assert lines == ["x,y", "0.1,a", "0.3333333333333333,2"]

    def test_rows_json_omits_time(self):
        cfg = tiny(algorithms=("disc_maxsinr",))
        rows, _ = evaluate_channel(build_channel_set(cfg.channel, 0), cfg, 0)
        out = rows_to_json(rows)
        assert "wall_time" not in out[0]
        json.dumps(out)
