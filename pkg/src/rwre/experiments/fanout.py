"""Deterministic task fan-out and report scaffolding."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Sequence

from .. import __version__
from .config import StudyConfig
from .report import ExperimentReport


def fan_out(fn: Callable, tasks: Sequence, workers: int = 1) -> list:
    """``[fn(t) for t in tasks]``, optionally over processes; results keep task order."""
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks))


def new_report(cfg: StudyConfig, seeds: dict) -> ExperimentReport:
    return ExperimentReport(
        study=cfg.study,
        provenance={
            "config": cfg.to_dict(),
            "config_hash": cfg.config_hash(),
            "seeds": {k: [int(s) for s in v] for k, v in seeds.items()},
            "code_version": __version__,
        },
    )
