"""Select the compiled tree-growth kernels, falling back to pure Python.

Set ``GWLDP_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _kernels_py

python = _kernels_py
compiled = None

if os.environ.get("GWLDP_PURE_PYTHON") != "1":
    try:
        from . import _kernels as compiled
    except ImportError:
        compiled = None

kernels = compiled or python
NAME = kernels.NAME
