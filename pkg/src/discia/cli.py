"""Command-line entry point: ``discia <subcommand> ...``."""

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .channel_model import build_channel_set, load_channel_config, median_channel_config
from .discrete_link import SystemEncoders, save_json, sumrate_eval, transition_matrix_mc
from .experiments import (
    ExperimentConfig, ablation_fixed_pam, ablation_uniformize, export_constellation,
    pretrain_ablation, rows_to_json, run_asymmetric_cdf, sweep_symmetric, write_csv,
)
from .learned_encoder import EncoderParams, TrainConfig, train
from .maxsinr import BeamformerSet, MaxSinrConfig, run_maxsinr


def _channel(path):
    cfg = median_channel_config() if path in (None, "median") else load_channel_config(path)
    return build_channel_set(cfg)


def _config(args):
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig(median_channel_config())
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg


def _load_encoders(path, M):
    """Beamformer or checkpoint JSON -> (SystemEncoders, BeamformerSet or None)."""
    data = json.loads(Path(path).read_text())
    if "users" in data:
        return EncoderParams.from_dict(data).to_system(), None
    bf = BeamformerSet.from_dict(data)
    return SystemEncoders.from_beamformers(bf, M), bf


def _figure_path(out, suffix, disabled):
    return None if disabled else Path(out).with_suffix(suffix)


def cmd_maxsinr(args):
    ch = _channel(args.channel)
    cfg = MaxSinrConfig(num_runs=args.runs, max_iters=args.iters, rng_seed=args.seed or 0)
    run_maxsinr(ch, cfg).save(args.out)


def cmd_eval(args):
    ch = _channel(args.channel)
    enc, bf = _load_encoders(args.encoders, args.alphabet)
    combiners = None
    if args.algorithm == "maxsinr_linear":
        if bf is None:
            sys.exit("maxsinr_linear needs a beamformer file with combiners")
        combiners = bf.U
    seed = args.seed or 0
    rates, total = sumrate_eval(enc, ch, args.samples, seed, combiners=combiners)
    write_csv(args.out, ["user", "rate_bits"], [(i, float(r)) for i, r in enumerate(rates)])
    joints = [transition_matrix_mc(enc, ch, i, args.samples, "hard", rng_seed=seed,
                                   combiner=None if combiners is None else combiners[i]).joint.tolist()
              for i in range(enc.num_users)]
    save_json({"algorithm": args.algorithm, "rates": rates.tolist(), "sumrate": total,
               "transition_matrices": joints}, Path(args.out).with_suffix(".json"))
    print(f"sumrate {total:.4f} bits")


def cmd_train(args):
    ch = _channel(args.channel)
    if args.config:
        cfg = _config(args)
        tcfg, M = cfg.train, cfg.alphabet
    else:
        tcfg, M = TrainConfig(), args.alphabet
    if args.epochs:
        tcfg = replace(tcfg, epochs=args.epochs)
    if args.seed is not None:
        tcfg = replace(tcfg, rng_seed=args.seed, init_seed=args.seed)
    bf = BeamformerSet.load(args.beamformers) if args.beamformers else None
    if bf is None and tcfg.init == "pretrained":
        bf = run_maxsinr(ch, MaxSinrConfig(rng_seed=tcfg.rng_seed))
    params, hist = train(ch, tcfg, M=M, bf=bf)
    params.save(args.out)
    if args.history:
        hist.to_csv(args.history)
        fig = _figure_path(args.history, ".png", args.no_figures)
        if fig:
            from .plotting import plot_history

            plot_history(hist, fig)


def cmd_sweep(args):
    cfg = _config(args)
    curve, rows = sweep_symmetric(cfg)
    write_csv(args.out, ["theta_rad", "algorithm", "sumrate_bits"], curve)
    save_json(rows_to_json(rows), Path(args.out).with_suffix(".rows.json"))
    fig = _figure_path(args.out, ".png", args.no_figures)
    if fig:
        from .plotting import plot_sweep

        plot_sweep(curve, fig, title=f"SNR={cfg.channel.snr_db:g} dB, {cfg.alphabet}-PAM, "
                                     f"{cfg.channel.num_users} users")


def cmd_cdf(args):
    cfg = _config(args)
    cdf, rows = run_asymmetric_cdf(cfg)
    write_csv(args.out, ["sumrate_bits", "cum_prob", "algorithm"], cdf)
    save_json(rows_to_json(rows), Path(args.out).with_suffix(".rows.json"))
    fig = _figure_path(args.out, ".png", args.no_figures)
    if fig:
        from .plotting import plot_cdf

        plot_cdf(cdf, fig, title=f"SNR={cfg.channel.snr_db:g} dB, {cfg.alphabet}-PAM, "
                                 f"{cfg.channel.num_users} users")


def cmd_ablate(args):
    if args.variant == "pretrain":
        cfg = _config(args)
        pairs = pretrain_ablation(cfg)
        write_csv(args.out, ["channel_seed", "pretrained_bits", "random_bits", "pretrained_wins"],
                  [(p.channel_seed, p.pretrained, p.random, int(p.pretrained_wins)) for p in pairs])
        fig = _figure_path(args.out, ".png", args.no_figures)
        if fig:
            from .plotting import plot_pretrain

            plot_pretrain(pairs, fig)
        wins = sum(p.pretrained_wins for p in pairs)
        print(f"pretrained wins {wins}/{len(pairs)}")
        return
    if not args.checkpoint:
        sys.exit(f"ablate {args.variant} needs --checkpoint")
    params = EncoderParams.load(args.checkpoint)
    if args.variant == "uniform":
        out = ablation_uniformize(params, args.epsilon)
    else:
        out = ablation_fixed_pam(params)
    out.save(args.out)


def cmd_export(args):
    ch = _channel(args.channel)
    enc, _ = _load_encoders(args.encoders, args.alphabet)
    export_constellation(enc, ch, args.out, figure=_figure_path(args.out, ".png", args.no_figures))


def build_parser():
    p = argparse.ArgumentParser(prog="discia", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, channel=False, config=False, figures=False):
        sp.add_argument("--out", required=True)
        sp.add_argument("--seed", type=int)
        if channel:
            sp.add_argument("--channel", help="channel fixture JSON (default: median channel)")
        if config:
            sp.add_argument("--config", help="experiment config JSON")
        if figures:
            sp.add_argument("--no-figures", action="store_true")

    sp = sub.add_parser("maxsinr", help="MaxSINR beamformers for a channel")
    common(sp, channel=True)
    sp.add_argument("--runs", type=int, default=10)
    sp.add_argument("--iters", type=int, default=200)
    sp.set_defaults(func=cmd_maxsinr)

    sp = sub.add_parser("eval", help="per-user rates of given encoders")
    common(sp, channel=True)
    sp.add_argument("--encoders", required=True, help="beamformer or checkpoint JSON")
    sp.add_argument("--alphabet", "-M", type=int, default=8)
    sp.add_argument("--algorithm", choices=("disc_maxsinr", "maxsinr_linear"),
                    default="disc_maxsinr", help="receiver used with a beamformer file")
    sp.add_argument("--samples", type=int, default=10**5, help="samples per message")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("train", help="train the DISC-MaxSINR+ encoder")
    common(sp, channel=True, config=True, figures=True)
    sp.add_argument("--beamformers", help="MaxSINR beamformer JSON for pretraining")
    sp.add_argument("--alphabet", "-M", type=int, default=8)
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--history", help="training history CSV")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("sweep", help="symmetric-channel sumrate curve")
    common(sp, config=True, figures=True)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("cdf", help="sumrate CDF over random-phase channels")
    common(sp, config=True, figures=True)
    sp.set_defaults(func=cmd_cdf)

    sp = sub.add_parser("ablate", help="constellation and pretraining ablations")
    sp.add_argument("variant", choices=("uniform", "fixedpam", "pretrain"))
    common(sp, config=True, figures=True)
    sp.add_argument("--checkpoint")
    sp.add_argument("--epsilon", type=float, default=0.05)
    sp.set_defaults(func=cmd_ablate)

    sp = sub.add_parser("export-constellation", help="noise-free receive points per user")
    common(sp, channel=True, figures=True)
    sp.add_argument("--encoders", required=True)
    sp.add_argument("--alphabet", "-M", type=int, default=8)
    sp.set_defaults(func=cmd_export)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    args.func(args)


if __name__ == "__main__":
    main()
