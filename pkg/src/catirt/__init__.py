"""Adaptive testing on the 3PL IRT model.

Subpackages cover the model primitives (:mod:`catirt.irt`), calibration
and EAP estimation (:mod:`catirt.calibration`), the adaptive session
engine (:mod:`catirt.engine`), the Monte-Carlo experiment harness
(:mod:`catirt.simulate`), exercise-log analytics (:mod:`catirt.exercises`),
dataset synthesis (:mod:`catirt.synth`), and file formats plus the CLI
(:mod:`catirt.dataio`, :mod:`catirt.cli`).
"""

__version__ = "0.1.0"

from .irt import (
    Ability,
    ItemBank,
    ItemParams,
    item_information,
    prob_correct,
    response_log_likelihood,
    sem,
    test_information,
)
from .calibration import (
    CalibrationConfig,
    CalibrationResult,
    QuadratureGrid,
    ResponseRecord,
    calibrate_bank,
    cefr_to_difficulty,
    default_grid,
    estimate_ability_eap,
    map_theta_to_cefr,
)

__all__ = [
    "__version__",
    "Ability",
    "ItemBank",
    "ItemParams",
    "item_information",
    "prob_correct",
    "response_log_likelihood",
    "sem",
    "test_information",
    "CalibrationConfig",
    "CalibrationResult",
    "QuadratureGrid",
    "ResponseRecord",
    "calibrate_bank",
    "cefr_to_difficulty",
    "default_grid",
    "estimate_ability_eap",
    "map_theta_to_cefr",
]
