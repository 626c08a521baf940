"""Artificial ECG with controllable T-wave alternans, and MMA-based TWA analysis."""
from .beat_model import GaussianKernel, LeadTemplate, MorphologyTemplate, fit_template
from .evaluation import loot, optimal_operating_point, roc_auc, summarize
from .library import builtin_templates
from .noise import mix
from .synthesizer import SynthesisConfig, apply_twa, dower_transform, synthesize_vcg
from .twa import mma_twa, sliding_twa, surrogate_test

__version__ = "0.1.0"
