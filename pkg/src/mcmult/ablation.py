"""Ablation arms over variants, MulT depth, branches and the block/layer grid."""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

from .config import Modality, ModelConfig, Variant, incoming
from .data import MultimodalSample
from .errors import ConfigError
from .model import MCMulT
from .training import TrainConfig, evaluate, train

log = logging.getLogger(__name__)

AXES = ("variants", "depth", "branches", "hyperparams")
RESULT_HEADER = ("arm", "seed", "acc7", "acc2", "f1", "mae", "corr", "params", "wall_seconds")
MULT_DEPTHS = (5, 7, 10, 12)
BLOCK_GRID = (1, 2, 3, 4, 5)
LAYER_GRID = (1, 2, 3, 4)


@dataclass(frozen=True)
class Arm:
    name: str
    cfg: ModelConfig


def ablation_arms(base: ModelConfig, axis: str) -> list[Arm]:
    if axis == "variants":
        return [Arm(v.value, base.with_(variant=v, flat_depth=None)) for v in Variant]
    if axis == "depth":
        arms = [Arm("MCMulT", base.with_(variant=Variant.MCMULT))]
        arms += [Arm(f"MulT-{n}", base.with_(variant=Variant.MULT, flat_depth=n)) for n in MULT_DEPTHS]
        return arms
    if axis == "branches":
        names = {Modality.L: "text", Modality.V: "vision", Modality.A: "audio"}
        arms = [Arm(f"{names[m]} only", base.with_(unimodal=m)) for m in Modality]
        for t in Modality:
            a, b = incoming(t)
            label = f"{base.variant.value} ({a.source.value},{b.source.value}->{t.value})"
            arms.append(Arm(label, base.with_(branches=(a, b), unimodal=None)))
        arms.append(Arm(base.variant.value, base.with_(unimodal=None)))
        return arms
    if axis == "hyperparams":
        arms = [Arm(f"B={b}", base.with_(blocks=b)) for b in BLOCK_GRID]
        arms += [Arm(f"L={l}", base.with_(layers=l)) for l in LAYER_GRID]
        return arms
    raise ConfigError(f"unknown ablation axis {axis!r}; choose from {AXES}")


def run_arm(
    arm: Arm,
    seed: int,
    splits: tuple[Sequence[MultimodalSample], Sequence[MultimodalSample], Sequence[MultimodalSample]],
    train_cfg: TrainConfig,
) -> dict:
    """Train and test one arm; parameter init and data order share ``seed`` across arms."""
    t0 = time.perf_counter()
    train_set, valid_set, test_set = splits
    model = MCMulT(arm.cfg, seed=seed)
    train(model, train_set, valid_set, replace(train_cfg, seed=seed))
    report = evaluate(model, test_set)
    return {
        "arm": arm.name,
        "seed": seed,
        **report.as_dict(),
        "params": model.num_parameters(),
        "wall_seconds": round(time.perf_counter() - t0, 3),
    }


def ablation_run(
    base: ModelConfig,
    axis: str,
    seeds: Sequence[int],
    splits,
    train_cfg: TrainConfig = TrainConfig(),
    out_path=None,
) -> list[dict]:
    """Every arm of ``axis`` crossed with ``seeds``; failures become marked rows."""
    rows = []
    for arm in ablation_arms(base, axis):
        for seed in seeds:
            try:
                row = run_arm(arm, seed, splits, train_cfg)
            except Exception as err:  # a failing arm must not stop the sweep
                log.warning("arm %s seed %s failed: %s", arm.name, seed, err)
                row = {k: "failed" for k in RESULT_HEADER}
                row.update(arm=arm.name, seed=seed, params=_safe_count(arm.cfg), wall_seconds=math.nan)
            rows.append(row)
            log.info("%s", row)
    if out_path is not None:
        write_results(rows, out_path)
    return rows


def _safe_count(cfg: ModelConfig):
    try:
        return MCMulT(cfg).num_parameters()
    except Exception:
        return "failed"


def write_results(rows: Sequence[dict], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=RESULT_HEADER)
        w.writeheader()
        for row in rows:
            w.writerow({k: row[k] for k in RESULT_HEADER})
    return path
