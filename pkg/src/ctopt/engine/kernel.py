"""Select the reverse-sweep kernel: compiled extension if importable, else pure Python.

Set ``CTOPT_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _sweep_py

if os.environ.get("CTOPT_PURE_PYTHON"):
    reverse_sweep = _sweep_py.reverse_sweep
    BACKEND = "python"
else:
    try:
        from ._sweep import reverse_sweep
        BACKEND = "cython"
    except ImportError:
        reverse_sweep = _sweep_py.reverse_sweep
        BACKEND = "python"

python_sweep = _sweep_py.reverse_sweep
