"""Command-line entry point: ``durian train | entropy | analyze-rewards``.

Exit codes: 0 success, 2 configuration error, 3 runtime error, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields

from durian.config import ExperimentConfig, flag_name, load_config
from durian.difficulty import perceptual_difficulty, quantile, write_scores_csv
from durian.errors import ConfigError, DurianError
from durian.linalg import load_feature_matrix

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_IO = 0, 2, 3, 4

TRAIN_EPILOG = """\
output files (in --out-dir):
  metrics.csv        step,objective,mean_reward,mean_accuracy,mean_format,loss,kl,
                     clip_frac,extreme_ratio,masked_frac,masked_rows,starved,
                     percep_std_0..2,reason_std_0..(b-1)
  diag.jsonl         one record per sample per step: rewards, group labels, advantages
  extreme_table.csv  per-step effective / extreme-success / extreme-failure / ratio
  config.txt         fully resolved configuration (valid --config input)
  summary.json       held-out accuracy before/after training and the extreme table
floats are written with 6 significant digits. DURIAN_SEED sets the seed when
neither the config file nor --seed does.
"""

ENTROPY_EPILOG = """\
stdout columns: path,P,d,entropy; followed by '# Q25,<value>' and '# Q75,<value>'.
input: text files with a 'P d' header and P rows of d reals, or '.f64' files
(uint32 P, uint32 d little-endian, then P*d little-endian float64 values).
"""

ANALYZE_EPILOG = """\
input: JSONL records with sample_id, rollout_id and either 'accuracy' or
'truth' plus 'response_text' / 'token_ids'; optional 'step' (default 1).
stdout: the extreme-sample table, one column per step.
"""


def _add_config_flags(parser):
    defaults = ExperimentConfig()
    group = parser.add_argument_group("experiment settings (override --config)")
    for f in fields(ExperimentConfig):
        default = getattr(defaults, f.name)
        flag = "--" + flag_name(f.name)
        if isinstance(default, bool):
            group.add_argument(flag, dest=f.name, action=argparse.BooleanOptionalAction, default=None,
                               help=f"default: {str(default).lower()}")
        else:
            shown = ",".join(map(str, default)) if isinstance(default, tuple) else default
            group.add_argument(flag, dest=f.name, default=None, metavar="VALUE",
                               help=f"default: {shown}")


def build_parser():
    parser = argparse.ArgumentParser(prog="durian", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="run a training experiment",
                           epilog=TRAIN_EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    train.add_argument("--config", help="flat 'key = value' config file")
    train.add_argument("--compare", action="store_true",
                       help="also run vanilla GRPO advantages into <out-dir>/vanilla")
    _add_config_flags(train)

    ent = sub.add_parser("entropy", help="perceptual difficulty of feature-matrix files",
                         epilog=ENTROPY_EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    ent.add_argument("files", nargs="+")
    ent.add_argument("--scores-out", help="also write sample_id,entropy CSV here")

    ana = sub.add_parser("analyze-rewards", help="extreme-sample table from a rollout reward log",
                         epilog=ANALYZE_EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    ana.add_argument("log")
    ana.add_argument("--group-size", "-G", type=int, default=8)
    return parser


def cmd_train(args, out=None):
    out = out or sys.stdout
    from durian.sim.experiment import run_comparison, run_experiment

    overrides = {f.name: getattr(args, f.name) for f in fields(ExperimentConfig)}
    cfg = load_config(args.config, overrides)
    if args.compare:
        summary = run_comparison(cfg)
        for name, s in summary.items():
            print(f"{name}: eval accuracy {s['initial_eval_accuracy']:.4f} -> "
                  f"{s['final_eval_accuracy']:.4f}", file=out)
    else:
        s = run_experiment(cfg)
        print(f"{cfg.objective}: eval accuracy {s['initial_eval_accuracy']:.4f} -> "
              f"{s['final_eval_accuracy']:.4f}; outputs in {cfg.out_dir}", file=out)
    return EXIT_OK


def cmd_entropy(args, out=None, err=None):
    out, err = out or sys.stdout, err or sys.stderr
    scored = []
    for path in args.files:
        try:
            F = load_feature_matrix(path)
            scored.append((path, F.shape, perceptual_difficulty(F)))
        except (OSError, DurianError) as exc:
            print(f"warning: skipping {path}: {exc}", file=err)
    if not scored:
        print("error: no feature matrix could be scored", file=err)
        return EXIT_IO
    print("path,P,d,entropy", file=out)
    for path, (P, d), h in scored:
        print(f"{path},{P},{d},{h:.6g}", file=out)
    values = [h for _, _, h in scored]
    print(f"# Q25,{quantile(values, 0.25):.6g}", file=out)
    print(f"# Q75,{quantile(values, 0.75):.6g}", file=out)
    if args.scores_out:
        write_scores_csv(args.scores_out, values, "entropy")
    return EXIT_OK


def cmd_analyze_rewards(args, out=None, err=None):
    out, err = out or sys.stdout, err or sys.stderr
    from durian.sim.stats import analyze_reward_records, write_extreme_table

    if args.group_size < 2:
        raise ConfigError("group-size", "must be >= 2")
    records = []
    with open(args.log) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise DurianError(f"{args.log}:{lineno}: invalid JSON ({exc.msg})") from None
    try:
        stats, excluded = analyze_reward_records(records, args.group_size)
    except DurianError as exc:
        raise DurianError(f"{args.log}: {exc}") from None
    if excluded:
        print(f"excluded {excluded} incomplete groups (need {args.group_size} rollouts)", file=err)
    write_extreme_table(out, stats, args.group_size)
    return EXIT_OK


COMMANDS = {"train": cmd_train, "entropy": cmd_entropy, "analyze-rewards": cmd_analyze_rewards}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        name = f"{exc.filename}: " if getattr(exc, "filename", None) else ""
        print(f"I/O error: {name}{exc.strerror or exc}", file=sys.stderr)
        return EXIT_IO
    except DurianError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
