"""Multi-level replanning pick-and-place executive.

A deterministic blocks-world testbed around a task-and-motion-planning loop:
symbolic solve -> online subtask rescheduling -> anytime motion replanning ->
reactive execution, with RC / RLDS / MMRF framework variants for ablation.
"""

from ._kernels import BACKEND as kernel_backend

__version__ = "0.1.0"

__all__ = ["kernel_backend", "__version__"]
