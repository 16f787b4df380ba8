"""Differentiable optimization of multiplier and MAC compressor trees."""
from .engine import BACKEND
from .golden import golden_area, golden_sta
from .impl_lib import ImplSet, characterize, characterize_all, load_catalog
from .legalize import LegalDesign, baseline_design, embed, hungarian_max, legalize
from .liberty import TimingLibrary, parse_liberty, read_liberty, write_liberty
from .optimizer import RunConfig, init_vars, optimize
from .pipeline import default_impls, load_library, run
from .sta import Conditions, TimingModel, analyze
from .tree import build_tree

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "Conditions", "ImplSet", "LegalDesign", "RunConfig", "TimingLibrary", "TimingModel",
    "analyze", "baseline_design", "build_tree", "characterize", "characterize_all", "default_impls",
    "embed", "golden_area", "golden_sta", "hungarian_max", "init_vars", "legalize", "load_catalog",
    "load_library", "optimize", "parse_liberty", "read_liberty", "run", "write_liberty",
]
