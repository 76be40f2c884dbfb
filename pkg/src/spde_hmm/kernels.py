"""Backend selection for the hot kernels.

The compiled Cython extension is used when it imports; otherwise the numpy
fallback is used. Set ``SPDE_HMM_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("SPDE_HMM_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        pass
    else:
        _impl = _compiled
        BACKEND = "cython"

philox4x64 = _impl.philox4x64
gaussians = _impl.gaussians
micro_chain = _impl.micro_chain
KEY_SALT = _kernels_py.KEY_SALT
