"""
End-to-end experiments: algorithm comparisons on symmetric and random
channels, constellation ablations, the pretraining study and constellation
exports.

Algorithms are named

* ``maxsinr_linear``: PAM on MaxSINR precoders, projection onto the MaxSINR
  combiner, ML over the projected codebook.
* ``disc_maxsinr``: same encoder, ML on the full received vector.
* ``disc_maxsinr_plus``: trained encoder, full ML.
* ``plus_U``: trained encoder with its constellation regularized to a
  uniform grid over the learned number of distinct levels.
* ``plus_D``: trained precoders and powers with plain PAM.

Every random choice is keyed by the experiment seed, so results are
reproducible bit for bit. All algorithms on one channel are evaluated on
the same Monte-Carlo samples.
"""

from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import dataclass, field, asdict, replace
from pathlib import Path

import numpy as np

from .channel_model import (
    ChannelConfig, ChannelSet, build_channel_set, load_channel_config, median_channel_config,
)
from .discrete_link import SystemEncoders, pam_constellation, sumrate_eval
from .learned_encoder import (
    EncoderParams, TrainConfig, pretrain_init, project_constraints, random_init, train,
)
from .maxsinr import BeamformerSet, MaxSinrConfig, run_maxsinr

log = logging.getLogger(__name__)

ALGORITHMS = ("maxsinr_linear", "disc_maxsinr", "disc_maxsinr_plus", "plus_U", "plus_D")
SWEEP_THETAS = tuple(np.pi * k / 12 for k in (1, 2, 3, 4, 5, 6))

# stream tags for derive_seed
_CHANNEL, _MAXSINR, _TRAIN, _EVAL, _RANDOM_INIT = range(5)


def derive_seed(*keys):
    """Stable 32-bit seed from integer keys."""
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1)[0])


@dataclass
class ExperimentConfig:
    channel: ChannelConfig
    alphabet: int = 8
    algorithms: tuple = ALGORITHMS[:3]
    maxsinr: MaxSinrConfig = field(default_factory=MaxSinrConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval_samples: int = 10**5
    num_channels: int = 10
    seed: int = 0
    uniform_epsilon: float = 0.05
    theta_grid: tuple = SWEEP_THETAS

    def __post_init__(self):
        pam_constellation(self.alphabet)  # validates M
        self.algorithms = tuple(self.algorithms)
        unknown = set(self.algorithms) - set(ALGORITHMS)
        if unknown:
            raise ValueError(f"unknown algorithms: {sorted(unknown)}")
        if self.eval_samples < 1 or self.num_channels < 1:
            raise ValueError("eval_samples and num_channels must be positive")
        self.theta_grid = tuple(float(t) for t in self.theta_grid)

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        if "channel_file" in data:
            chan = load_channel_config(data.pop("channel_file"))
        elif data.get("channel") in (None, "median"):
            data.pop("channel", None)
            chan = median_channel_config()
        else:
            chan = ChannelConfig(**data.pop("channel"))
        maxsinr = MaxSinrConfig(**data.pop("maxsinr", {}))
        train_cfg = TrainConfig(**data.pop("train", {}))
        return cls(channel=chan, maxsinr=maxsinr, train=train_cfg, **data)

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self):
        ch = self.channel
        theta = ch.theta
        return {
            "channel": {
                "num_users": ch.num_users, "snr_db": ch.snr_db,
                "alpha": np.asarray(ch.alpha).tolist(), "theta_policy": ch.theta_policy,
                "theta": np.asarray(theta).tolist() if theta is not None else None,
                "real_dim": ch.real_dim,
            },
            "alphabet": self.alphabet,
            "algorithms": list(self.algorithms),
            "maxsinr": asdict(self.maxsinr),
            "train": self.train.to_dict(),
            "eval_samples": self.eval_samples,
            "num_channels": self.num_channels,
            "seed": self.seed,
            "uniform_epsilon": self.uniform_epsilon,
            "theta_grid": list(self.theta_grid),
        }


@dataclass
class ResultRow:
    experiment: str
    channel_seed: int
    algorithm: str
    rates: np.ndarray
    sumrate: float
    wall_time: float = 0.0


def eval_maxsinr_linear(ch: ChannelSet, bf: BeamformerSet, M, N, seed):
    """Linear MaxSINR receiver: project onto ``U_i`` then decode the scalar by ML."""
    enc = SystemEncoders.from_beamformers(bf, M)
    t0 = time.perf_counter()
    rates, total = sumrate_eval(enc, ch, N, seed, combiners=bf.U)
    return ResultRow("", seed, "maxsinr_linear", rates, total, time.perf_counter() - t0)


def ablation_uniformize(params: EncoderParams, epsilon=0.05):
    """Variant U: snap each constellation onto a uniform grid of its distinct levels.

    Points closer than ``epsilon`` (single linkage on the real line) form
    one level. The ``d`` levels are replaced, in order, by a uniform
    antisymmetric ``d``-point grid and the result is rescaled to unit
    average power over messages. Precoders and powers are kept.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be > 0")
    full = params.constellation()
    K, M = full.shape
    out = np.empty_like(full)
    for i in range(K):
        order = np.argsort(full[i], kind="stable")
        gaps = np.diff(full[i][order])
        level = np.concatenate([[0], np.cumsum(gaps > epsilon)])
        d = int(level[-1]) + 1
        if d < 2:
            raise ValueError(f"user {i}: epsilon {epsilon} merges the whole constellation")
        grid = np.arange(-(d - 1), d, 2, dtype=float)
        out[i, order] = grid[level]
    h = M // 2
    snapped = EncoderParams(out[:, h:], params.v, params.p, params.beta)
    return project_constraints(snapped)


def ablation_fixed_pam(params: EncoderParams, M=None):
    """Variant D: PAM constellations, learned precoders and powers."""
    M = M or params.alphabet
    half = pam_constellation(M)[M // 2:]
    return EncoderParams(np.tile(half, (params.num_users, 1)), params.v.copy(),
                         params.p.copy(), params.beta.copy())


def evaluate_channel(ch: ChannelSet, cfg: ExperimentConfig, key, experiment=""):
    """Run every requested algorithm on one channel.

    Returns
    -------
    rows : list of ResultRow, in ``ALGORITHMS`` order
    artifacts : dict with the MaxSINR beamformers and trained parameters
    """
    M, N = cfg.alphabet, cfg.eval_samples
    eval_seed = derive_seed(cfg.seed, _EVAL, key)
    t0 = time.perf_counter()
    bf = run_maxsinr(ch, replace(cfg.maxsinr, rng_seed=derive_seed(cfg.seed, _MAXSINR, key)))
    maxsinr_time = time.perf_counter() - t0
    artifacts = {"beamformers": bf}
    rows = []

    def row(alg, enc, extra_time=0.0, combiners=None):
        t = time.perf_counter()
        rates, total = sumrate_eval(enc, ch, N, eval_seed, combiners=combiners)
        return ResultRow(experiment, key, alg, rates, total, time.perf_counter() - t + extra_time)

    want = set(cfg.algorithms)
    if "maxsinr_linear" in want:
        r = eval_maxsinr_linear(ch, bf, M, N, eval_seed)
        rows.append(replace(r, experiment=experiment, channel_seed=key,
                            wall_time=r.wall_time + maxsinr_time))
    if "disc_maxsinr" in want:
        rows.append(row("disc_maxsinr", SystemEncoders.from_beamformers(bf, M), maxsinr_time))
    if want & {"disc_maxsinr_plus", "plus_U", "plus_D"}:
        t = time.perf_counter()
        tcfg = replace(cfg.train, rng_seed=derive_seed(cfg.seed, _TRAIN, key))
        params, hist = train(ch, tcfg, M=M, bf=bf)
        train_time = time.perf_counter() - t
        artifacts["trained"] = params
        artifacts["history"] = hist
        if "disc_maxsinr_plus" in want:
            rows.append(row("disc_maxsinr_plus", params.to_system(), train_time))
        if "plus_U" in want:
            u = ablation_uniformize(params, cfg.uniform_epsilon)
            artifacts["plus_U"] = u
            rows.append(row("plus_U", u.to_system(), train_time))
        if "plus_D" in want:
            d = ablation_fixed_pam(params, M)
            artifacts["plus_D"] = d
            rows.append(row("plus_D", d.to_system(), train_time))
    for r in rows:
        log.info("%s channel=%s %-18s sumrate=%.4f (%.1fs)", experiment, key, r.algorithm,
                 r.sumrate, r.wall_time)
    return rows, artifacts


def sweep_symmetric(cfg: ExperimentConfig, theta_grid=None):
    """Sumrate of every algorithm on symmetric channels over a grid of angles.

    Returns
    -------
    curve : list of (theta_rad, algorithm, sumrate_bits)
    rows : list of ResultRow
    """
    grid = cfg.theta_grid if theta_grid is None else tuple(theta_grid)
    if any(not 0 < t <= np.pi / 2 + 1e-12 for t in grid):
        raise ValueError("theta grid must lie in (0, pi/2]")
    curve, rows = [], []
    for k, theta in enumerate(grid):
        ccfg = replace(cfg.channel, theta_policy="symmetric", theta=theta)
        ch = build_channel_set(ccfg)
        r, _ = evaluate_channel(ch, cfg, k, experiment="sweep")
        rows.extend(r)
        curve.extend((theta, x.algorithm, x.sumrate) for x in r)
    return curve, rows


def empirical_cdf(values):
    """Sorted values with cumulative probabilities ``(k + 1) / n``."""
    v = np.sort(np.asarray(values, dtype=float))
    return v, np.arange(1, v.size + 1) / v.size


def sample_channels(cfg: ExperimentConfig):
    """The ``num_channels`` channels of a random-phase study, with their seeds."""
    out = []
    for c in range(cfg.num_channels):
        seed = derive_seed(cfg.seed, _CHANNEL, c)
        ccfg = replace(cfg.channel, theta_policy="random")
        out.append((seed, build_channel_set(ccfg, seed)))
    return out


def run_asymmetric_cdf(cfg: ExperimentConfig):
    """Per-algorithm empirical CDF of the sumrate over random-phase channels.

    Returns
    -------
    cdf : list of (sumrate_bits, cum_prob, algorithm)
    rows : list of ResultRow
    """
    rows = []
    for c, (seed, ch) in enumerate(sample_channels(cfg)):
        r, _ = evaluate_channel(ch, cfg, c, experiment="cdf")
        for x in r:
            x.channel_seed = seed
        rows.extend(r)
    cdf = []
    for alg in ALGORITHMS:
        vals = [x.sumrate for x in rows if x.algorithm == alg]
        if vals:
            xs, ps = empirical_cdf(vals)
            cdf.extend((float(a), float(b), alg) for a, b in zip(xs, ps))
    return cdf, rows


@dataclass
class PretrainPair:
    channel_seed: int
    pretrained: float
    random: float
    pretrained_epochs: int
    random_epochs: int

    @property
    def pretrained_wins(self):
        return self.pretrained > self.random


def pretrain_ablation(cfg: ExperimentConfig):
    """Train each channel from the MaxSINR/PAM start and from a random start.

    Both arms get the same number of epochs (early stopping is disabled)
    and are evaluated on the same samples.
    """
    M, N = cfg.alphabet, cfg.eval_samples
    tcfg = replace(cfg.train, early_stop=False)
    pairs = []
    for c, (seed, ch) in enumerate(sample_channels(cfg)):
        bf = run_maxsinr(ch, replace(cfg.maxsinr, rng_seed=derive_seed(cfg.seed, _MAXSINR, c)))
        t = replace(tcfg, rng_seed=derive_seed(cfg.seed, _TRAIN, c))
        eval_seed = derive_seed(cfg.seed, _EVAL, c)
        pre, hp = train(ch, t, init=pretrain_init(bf, M, t.beta_init))
        rnd_init = random_init(ch.num_users, M, ch.dim, derive_seed(cfg.seed, _RANDOM_INIT, c),
                               t.beta_init)
        rnd, hr = train(ch, t, init=rnd_init)
        _, s_pre = sumrate_eval(pre.to_system(), ch, N, eval_seed)
        _, s_rnd = sumrate_eval(rnd.to_system(), ch, N, eval_seed)
        log.info("pretrain channel=%d pretrained=%.4f random=%.4f", c, s_pre, s_rnd)
        pairs.append(PretrainPair(seed, s_pre, s_rnd, len(hp), len(hr)))
    return pairs


def constellation_records(encoders: SystemEncoders, ch: ChannelSet):
    """Noise-free ``H_ij X_j(w)`` for every receiver ``i``, user ``j``, message ``w``."""
    X = encoders.transmit_points()
    K, M, _ = X.shape
    recs = []
    for i in range(K):
        for j in range(K):
            pts = X[j] @ ch.H[i, j].T
            for w in range(M):
                recs.append({"receiver": i, "user": j, "message": w, "y": pts[w].tolist()})
    return recs


def export_constellation(encoders: SystemEncoders, ch: ChannelSet, path, figure=None):
    """Write the per-receiver scatter data as JSON, optionally with a figure."""
    recs = constellation_records(encoders, ch)
    Path(path).write_text(json.dumps(recs, indent=1) + "\n")
    if figure:
        from .plotting import plot_constellation

        plot_constellation(recs, figure)
    return recs


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in r])


def rows_to_json(rows):
    return [
        {"experiment": r.experiment, "channel_seed": int(r.channel_seed), "algorithm": r.algorithm,
         "rates": [float(x) for x in r.rates], "sumrate": float(r.sumrate)}
        for r in rows
    ]
