"""The eight-configuration training protocol."""

from __future__ import annotations

import os
from dataclasses import replace
from typing import NamedTuple

from .attacks import epsilon_sweep
from .checkpoint import round_trip, save_checkpoint
from .config import RunConfig, load_datasets
from .io import write_sweep_csv, write_text
from .training import Mode, metrics_csv, train


class SuiteRun(NamedTuple):
    name: str
    mode: Mode
    augment: bool
    source: str | None  # run whose checkpoint a refined mode starts from


SUITE = (
    SuiteRun("baseline_aug", Mode.BASELINE, True, None),
    SuiteRun("baseline_noaug", Mode.BASELINE, False, None),
    SuiteRun("scl_aug", Mode.SCL_JOINT, True, None),
    SuiteRun("scl_noaug", Mode.SCL_JOINT, False, None),
    SuiteRun("refined_scl", Mode.REFINED_SCL, False, "baseline_noaug"),
    SuiteRun("margin_scl", Mode.MARGIN_JOINT, False, None),
    SuiteRun("baseline_refined_scl", Mode.REFINED_SCL, True, "baseline_aug"),
    SuiteRun("baseline_margin_scl", Mode.REFINED_MARGIN, True, "baseline_aug"),
)


class SuiteError(RuntimeError):
    pass


def run_suite(base: RunConfig, out_dir: str | os.PathLike, runs=SUITE) -> dict[str, str]:
    """Train every configuration in order; returns run name -> metrics CSV path.

    Writes ``metrics/<name>.csv``, ``checkpoints/<name>.ckpt`` and
    ``attack/<name>.csv`` (epsilon sweep on the test split) under ``out_dir``.
    """
    train_set, test_set = load_datasets(base)
    for sub in ("metrics", "checkpoints", "attack"):
        os.makedirs(os.path.join(out_dir, sub), exist_ok=True)
    trained = {}
    paths = {}
    for run in runs:
        cfg = replace(base, mode=run.mode, augment=run.augment)
        try:
            initial = None
            if run.source is not None:
                if run.source not in trained:
                    raise SuiteError(f"source run {run.source!r} has not been trained")
                initial = trained[run.source]
            params, history = train(cfg.train_config(), train_set, initial=initial, eval_set=test_set,
                                    model_config=cfg.model)
            # Later stages see exactly what a reloaded checkpoint holds.
            params = round_trip(params)
            trained[run.name] = params
            metrics_path = os.path.join(out_dir, "metrics", f"{run.name}.csv")
            write_text(metrics_path, metrics_csv(history))
            save_checkpoint(params, os.path.join(out_dir, "checkpoints", f"{run.name}.ckpt"))
            write_sweep_csv(os.path.join(out_dir, "attack", f"{run.name}.csv"),
                            epsilon_sweep(params, test_set, cfg.attack))
        except SuiteError:
            raise
        except Exception as exc:
            raise SuiteError(f"suite run {run.name} ({run.mode.value}) failed: {exc}") from exc
        paths[run.name] = metrics_path
    return paths
