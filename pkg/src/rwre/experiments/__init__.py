"""Registered studies: each maps a :class:`StudyConfig` to an :class:`ExperimentReport`."""

from .checks import counting_study, excursion_law_study, golosov_study, oracle_study, valley_invariants_study
from .config import DEFAULTS, QUICK, STUDIES, StudyConfig, config_from_dict, default_config
from .report import ExperimentReport, Series, Verdict, canonical_json
from .studies import (exit_tail_study, height_scaling_study, hitting_scaling_study, lambda_tail_study,
                      liminf_trace, localization_study, ratio_study)

REGISTRY = {
    "oracle": oracle_study,
    "excursion_law": excursion_law_study,
    "counting": counting_study,
    "valley_invariants": valley_invariants_study,
    "height_scaling": height_scaling_study,
    "lambda_tail": lambda_tail_study,
    "localization": localization_study,
    "ratio": ratio_study,
    "hitting_scaling": hitting_scaling_study,
    "golosov": golosov_study,
    "exit_tail": exit_tail_study,
    "liminf_trace": liminf_trace,
}

assert set(REGISTRY) == set(STUDIES)


def run_study(cfg: StudyConfig) -> ExperimentReport:
    cfg.validate()
    return REGISTRY[cfg.study](cfg)


__all__ = ["REGISTRY", "run_study", "StudyConfig", "default_config", "config_from_dict", "DEFAULTS",
           "QUICK", "STUDIES", "ExperimentReport", "Series", "Verdict", "canonical_json"]
