from .config import ExperimentConfig, config_from_dict, load_config
from .presets import PRESETS, preset_gaussian_short_corr, preset_high_contrast, preset_patch_study
from .runner import compare, estimate, offline, report, run

__all__ = ["ExperimentConfig", "config_from_dict", "load_config", "PRESETS", "preset_patch_study",
           "preset_high_contrast", "preset_gaussian_short_corr", "offline", "estimate", "compare",
           "report", "run"]
