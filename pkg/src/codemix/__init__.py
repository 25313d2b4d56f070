"""Adversarial code-mixing toolkit.

Word- and phrase-level black-box attacks that embed foreign words or aligned
phrases into a matrix-language sentence, plus evaluation campaigns and
code-mixed training data generation.
"""

from .kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"

__all__ = ["KERNEL_BACKEND", "__version__"]
