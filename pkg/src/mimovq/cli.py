"""Command-line entry point: ``mimovq {gen,train,sweep,ood,bench}``.

Exit codes: 0 success, 2 configuration, 3 I/O or file format,
4 numeric or training failure, 5 shape mismatch.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .bench import benchmark_many
from .channel import generate_dataset, load_dataset, make_profile, save_dataset
from .config import DEFAULTS, RunConfig
from .errors import ConfigError, FormatError, NumericError, ShapeError
from .evaluate import check_compatible, evaluate_ood, evaluate_sweep, parse_snr_list
from .models import load_model, save_model
from .reporting import write_benchmarks, write_metrics, write_trace
from .train import train

log = logging.getLogger("mimovq")

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC, EXIT_SHAPE = 0, 2, 3, 4, 5


def _flag(parser, name: str, key: str, type_=str, help_: str = "", **kw):
    """Flag overriding config key ``key``; the shown default is the built-in one."""
    default = DEFAULTS[key]
    parser.add_argument(name, dest=key, type=type_, default=None,
                        help=f"{help_} [config key {key}; default: {default}]", **kw)


def _bool_flag(parser, name: str, key: str, help_: str):
    parser.add_argument(name, dest=key, action="store_const", const=True, default=None,
                        help=f"{help_} [config key {key}; default: {DEFAULTS[key]}]")


def _config_flag(parser):
    parser.add_argument("--config", type=Path, default=None,
                        help="JSON file of flat dotted keys; flags take precedence")


def _overrides(args) -> dict:
    return {k: v for k, v in vars(args).items() if "." in k}


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(prog="mimovq", description=__doc__.splitlines()[0], formatter_class=fmt)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="synthesize a channel dataset (MCHD file)", formatter_class=fmt)
    _config_flag(p)
    _flag(p, "--profile", "channel.profile", help_="cluster profile: cdl-a, cdl-b, cdl-c or cdl-d")
    _flag(p, "--samples", "channel.samples", int, "number of samples")
    _flag(p, "--seed", "channel.seed", int, "generation seed")
    _bool_flag(p, "--full-scale", "channel.full_scale", "16 antennas on a 624 x 140 grid")
    p.add_argument("--out", type=Path, required=True, help="output dataset path")

    p = sub.add_parser("train", help="train a predictor and write an MMDL checkpoint", formatter_class=fmt)
    _config_flag(p)
    p.add_argument("--model", required=True, type=str.lower, choices=["ae", "vae", "vqvae"], help="model kind")
    p.add_argument("--data", type=Path, required=True, help="training dataset (MCHD)")
    p.add_argument("--out", type=Path, required=True, help="checkpoint path; the loss trace goes to <out>.trace.csv")
    _flag(p, "--epochs", "train.epochs", int, "training epochs")
    _flag(p, "--lr", "train.lr", float, "Adam learning rate")
    _flag(p, "--batch-size", "train.batch_size", int, "mini-batch size")
    _flag(p, "--seed", "train.seed", int, "initialization and shuffling seed")
    _flag(p, "--kl-weight", "train.kl_weight", float, "KL weight (VAE)")
    _flag(p, "--commit-beta", "train.commit_beta", float, "commitment weight (VQ-VAE)")

    p = sub.add_parser("sweep", help="NMSE versus link SNR", formatter_class=fmt)
    _config_flag(p)
    p.add_argument("--ckpt", type=Path, required=True, help="checkpoint (MMDL)")
    p.add_argument("--data", type=Path, required=True, help="test dataset (MCHD)")
    _flag(p, "--snr", "link.snr", help_="comma-separated SNR points in dB; 'off' disables noise")
    _flag(p, "--seed", "link.seed", int, "link noise seed")
    p.add_argument("--out", type=Path, required=True, help="metrics CSV path")

    p = sub.add_parser("ood", help="NMSE on freshly generated profiles", formatter_class=fmt)
    _config_flag(p)
    p.add_argument("--ckpt", type=Path, required=True, help="checkpoint (MMDL)")
    _flag(p, "--profiles", "ood.profiles", help_="comma-separated profiles, e.g. a,b,d")
    _flag(p, "--samples", "ood.samples", int, "test samples per profile")
    _flag(p, "--seed", "ood.seed", int, "generation and link noise seed")
    _flag(p, "--snr", "ood.snr", help_="comma-separated SNR points")
    p.add_argument("--out", type=Path, required=True, help="metrics CSV path")

    p = sub.add_parser("bench", help="latency, training time, parameters and memory", formatter_class=fmt)
    _config_flag(p)
    p.add_argument("--ckpt", type=Path, nargs="+", required=True, help="one or more checkpoints")
    _flag(p, "--iters", "bench.iters", int, "timed single-sample inferences")
    _flag(p, "--warmup", "bench.warmup", int, "discarded warmup inferences")
    _flag(p, "--train-samples", "bench.train_samples", int, "samples in the timed training epoch (0 skips)")
    p.add_argument("--out", type=Path, required=True, help="benchmark CSV path")
    return parser


def _load_dataset(path: Path, cfg: RunConfig):
    return load_dataset(path, cfg.channel())


def cmd_gen(args, cfg: RunConfig) -> int:
    profile = cfg.profile()
    channel = cfg.channel()
    data = generate_dataset(profile, channel, cfg["channel.samples"], cfg["channel.seed"])
    save_dataset(data, args.out)
    spread = make_profile(profile, channel.delay_spread_s).rms_delay_spread()
    print(f"wrote {args.out}: n={len(data)} shape={tuple(data.h.shape[1:])} profile={profile} "
          f"rms_delay_spread={spread * 1e9:.3f} ns (target {channel.delay_spread_s * 1e9:g} ns)")
    return EXIT_OK


def cmd_train(args, cfg: RunConfig) -> int:
    data = _load_dataset(args.data, cfg)
    tcfg = cfg.train()
    c = data.config
    arch = cfg.arch(2 * c.m_s, 2 * c.m_r, c.num_subcarriers, c.num_symbols)
    model, trace = train(args.model.upper(), data, arch, tcfg)
    save_model(model, args.out)
    trace_path = args.out.with_suffix(".trace.csv")
    write_trace(trace_path, trace, tcfg.seed, cfg.digest())
    if trace:
        last = trace[-1]
        print(f"epoch {len(trace) - 1}: total={last.total:.6g} mse={last.mse:.6g} kl={last.kl:.6g} "
              f"vq={last.vq:.6g} commit={last.commit:.6g}")
    print(f"wrote {args.out} and {trace_path}")
    return EXIT_OK


def cmd_sweep(args, cfg: RunConfig) -> int:
    model = load_model(args.ckpt)
    data = _load_dataset(args.data, cfg)
    check_compatible(model, data)
    seed = cfg["link.seed"]
    report = evaluate_sweep(model, data, parse_snr_list(cfg["link.snr"]), seed)
    write_metrics(args.out, report.rows, seed, cfg.digest())
    for r in report.rows:
        print(f"{r.model} {r.profile} snr={r.snr_db}: {r.nmse_db:.2f} dB")
    return EXIT_OK


def cmd_ood(args, cfg: RunConfig) -> int:
    profiles = [t for t in cfg["ood.profiles"].split(",") if t.strip()]
    snr_list = parse_snr_list(cfg["ood.snr"])
    model = load_model(args.ckpt)
    seed = cfg["ood.seed"]
    report = evaluate_ood(model, profiles, cfg.channel(), cfg["ood.samples"], seed, snr_list)
    write_metrics(args.out, report.rows, seed, cfg.digest())
    for r in report.rows:
        print(f"{r.model} {r.profile} snr={r.snr_db}: {r.nmse_db:.2f} dB")
    return EXIT_OK


def cmd_bench(args, cfg: RunConfig) -> int:
    models = [load_model(p) for p in args.ckpt]
    rows = benchmark_many(models, cfg["bench.warmup"], cfg["bench.iters"], cfg["bench.train_samples"])
    write_benchmarks(args.out, rows, 0, cfg.digest())
    for r in rows:
        print(f"{r.model}: {r.inference_ms_median:.3f} ms median, {r.param_count} params, "
              f"{r.peak_mem_bytes} peak bytes")
    ordered = sorted(rows, key=lambda r: r.inference_ms_median)
    print("latency ordering: " + " <= ".join(r.model for r in ordered))
    return EXIT_OK


COMMANDS = {"gen": cmd_gen, "train": cmd_train, "sweep": cmd_sweep, "ood": cmd_ood, "bench": cmd_bench}


def _join_snr(argv: list[str]) -> list[str]:
    """Let ``--snr -10,-5,...`` through; argparse would read ``-10,...`` as a flag."""
    out, i = [], 0
    while i < len(argv):
        if argv[i] == "--snr" and i + 1 < len(argv):
            out.append(f"--snr={argv[i + 1]}")
            i += 2
        else:
            out.append(argv[i])
            i += 1
    return out


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    args = build_parser().parse_args(_join_snr(argv))
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = RunConfig.load(args.config, _overrides(args))
        return COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ShapeError as exc:
        print(f"error: shape mismatch: {exc}", file=sys.stderr)
        return EXIT_SHAPE
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
