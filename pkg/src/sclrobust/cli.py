"""Command-line entry point: ``sclrobust {train,refine,attack,eval,suite,gen-data}``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace

from .attacks import AttackConfig, epsilon_sweep
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import ConfigError, RunConfig, load_config, load_datasets
from .data import DataFormatError, synthesize_blobs, write_cifar100
from .evaluation import embedding_stats
from .io import summary_block, write_sweep_csv, write_text
from .suite import SuiteError, run_suite
from .training import Mode, metrics_csv, train

log = logging.getLogger("sclrobust")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_NOT_FOUND = 4
EXIT_FORMAT = 5
EXIT_RUN = 6


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        print(f"error: {self.prog}: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def _load_config(path: str) -> RunConfig:
    if not os.path.isfile(path):
        raise FileNotFoundError(f"config file not found: {path}")
    return load_config(path)


def _config_for_checkpoint(args) -> RunConfig:
    path = args.config or os.path.join(os.path.dirname(os.path.abspath(args.ckpt)), "config.json")
    return _load_config(path)


def _require_file(path: str, what: str) -> None:
    if not os.path.isfile(path):
        raise FileNotFoundError(f"{what} not found: {path}")


def _train_and_write(cfg: RunConfig, out: str, initial=None) -> None:
    train_set, test_set = load_datasets(cfg)
    os.makedirs(out, exist_ok=True)
    params, history = train(
        cfg.train_config(), train_set, initial=initial, eval_set=test_set, model_config=cfg.model,
        on_epoch=lambda m: log.info("epoch %d task=%.6f contrastive=%.6f total=%.6f acc=%.4f",
                                    m.epoch, m.task_loss, m.contrastive_loss, m.total_loss, m.clean_accuracy),
    )
    save_checkpoint(params, os.path.join(out, "model.ckpt"))
    write_text(os.path.join(out, "metrics.csv"), metrics_csv(history))
    write_text(os.path.join(out, "config.json"), cfg.to_json())


def cmd_train(args) -> None:
    cfg = _load_config(args.config)
    if cfg.mode.refined:
        raise ConfigError("mode", f"{cfg.mode.value} starts from a checkpoint; use the refine subcommand")
    _train_and_write(cfg, args.out)


def cmd_refine(args) -> None:
    _require_file(args.source, "source checkpoint")
    cfg = _load_config(args.config)
    if not cfg.mode.refined:
        raise ConfigError("mode", f"refine needs refined_scl or refined_margin, got {cfg.mode.value}")
    initial = load_checkpoint(args.source, cfg.model)
    _train_and_write(cfg, args.out, initial)


def _parse_eps(text: str | None, default: AttackConfig, clamp: bool) -> AttackConfig:
    if text is None:
        return replace(default, clamp_to_domain=clamp or default.clamp_to_domain)
    try:
        values = tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise UsageError(f"--eps expects comma-separated numbers, got {text!r}") from None
    try:
        return AttackConfig(values, clamp or default.clamp_to_domain)
    except ValueError as exc:
        raise UsageError(f"--eps: {exc}") from None


def cmd_attack(args) -> None:
    _require_file(args.ckpt, "checkpoint")
    cfg = _config_for_checkpoint(args)
    attack = _parse_eps(args.eps, cfg.attack, args.clamp)
    params = load_checkpoint(args.ckpt, cfg.model)
    _, test_set = load_datasets(cfg)
    out = args.out or os.path.join(os.path.dirname(os.path.abspath(args.ckpt)), "attack.csv")
    write_sweep_csv(out, epsilon_sweep(params, test_set, attack))


def cmd_eval(args) -> None:
    _require_file(args.ckpt, "checkpoint")
    cfg = _config_for_checkpoint(args)
    attack = _parse_eps(args.eps, cfg.attack, args.clamp)
    params = load_checkpoint(args.ckpt, cfg.model)
    _, test_set = load_datasets(cfg)
    out = args.out or os.path.dirname(os.path.abspath(args.ckpt))
    os.makedirs(out, exist_ok=True)
    sweep = epsilon_sweep(params, test_set, attack)
    stats = embedding_stats(params, test_set, seed=cfg.train.seed)
    write_sweep_csv(os.path.join(out, "eval.csv"), sweep)
    write_text(os.path.join(out, "summary.txt"), summary_block({
        "clean_accuracy": sweep[0][1],
        "mean_intra_cosine": stats.mean_intra,
        "mean_inter_cosine": stats.mean_inter,
        "gap": stats.gap,
    }))


def cmd_suite(args) -> None:
    cfg = _load_config(args.config)
    if cfg.mode.refined:
        cfg = replace(cfg, mode=Mode.BASELINE)
    run_suite(cfg, args.out)


def cmd_gen_data(args) -> None:
    os.makedirs(args.out, exist_ok=True)
    for split, per_class, stream in (("train", args.per_class, 0), ("test", args.test_per_class, 1)):
        samples = synthesize_blobs(args.classes, per_class, 32, args.sigma, args.seed, stream=stream)
        for s in samples:
            s.coarse_label = s.fine_label // 5
        write_cifar100(os.path.join(args.out, f"{split}.bin"), samples)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sclrobust", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="train a baseline or joint contrastive model")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("refine", help="refine a trained checkpoint with a combined loss")
    p.add_argument("--from", dest="source", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_refine)

    for name, func, help_text in (("attack", cmd_attack, "FGSM epsilon sweep on the test split"),
                                  ("eval", cmd_eval, "sweep plus embedding statistics")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--ckpt", required=True)
        p.add_argument("--config", help="defaults to config.json next to the checkpoint")
        p.add_argument("--eps", help="comma-separated epsilons, e.g. 0.01,0.02,0.03")
        p.add_argument("--clamp", action="store_true", help="clip adversarial inputs to the pixel domain")
        p.add_argument("--out")
        p.set_defaults(func=func)

    p = sub.add_parser("suite", help="run the eight-configuration protocol")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_suite)

    p = sub.add_parser("gen-data", help="write a synthetic CIFAR-100-format fixture")
    p.add_argument("--out", required=True)
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--per-class", type=int, default=200)
    p.add_argument("--test-per-class", type=int, default=50)
    p.add_argument("--sigma", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen_data)
    return parser


def _fail(status: int, message: str) -> int:
    print(f"error: {' '.join(str(message).split())}", file=sys.stderr)
    return status


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        args.func(args)
    except UsageError as exc:
        return _fail(EXIT_USAGE, exc)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, f"config error at {exc}")
    except FileNotFoundError as exc:
        return _fail(EXIT_NOT_FOUND, exc)
    except (DataFormatError, CheckpointError) as exc:
        return _fail(EXIT_FORMAT, exc)
    except SuiteError as exc:
        return _fail(EXIT_RUN, exc)
    except OSError as exc:
        return _fail(EXIT_NOT_FOUND, exc)
    except ValueError as exc:
        return _fail(EXIT_FAILURE, exc)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
