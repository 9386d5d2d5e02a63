"""Critique evaluation toolkit.

Scores natural-language critiques by splitting them into atomic information
units and judging factuality (precision) and coverage (recall), plus the
meta-evaluation statistics used to compare critique evaluators.
"""

try:
    # Installed wheel layout: the compiled module sits inside the package.
    from metacritique._metacritique import *  # noqa: F401,F403
except ImportError:
    # In-tree builds put the compiled module on PYTHONPATH directly.
    from _metacritique import *  # noqa: F401,F403

__version__ = "0.1.0"
