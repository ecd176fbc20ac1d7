"""Hot kernels: the compiled extension when built, the numpy reference otherwise.

Set ``TWEET2NEWS_PURE_PYTHON=1`` to force the reference implementation.
"""
import os

from . import _pykernels as reference

BACKEND = "python"
impl = reference

if os.environ.get("TWEET2NEWS_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # extension not built
        impl = reference

gru_forward = impl.gru_forward
gru_backward = impl.gru_backward
BpeMerger = impl.BpeMerger

__all__ = ["BACKEND", "BpeMerger", "gru_backward", "gru_forward", "reference"]
