"""Thread-count defaults, applied before numpy loads its BLAS backend.

AAPROX_THREADS caps the numeric thread pools (default 1, for deterministic
runs). This module must be imported before numpy anywhere in the package;
once a BLAS library is initialized the environment is ignored.
"""

import os

_threads = os.environ.get("AAPROX_THREADS", "1")
for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
             "NUMEXPR_NUM_THREADS", "VECLIB_MAXIMUM_THREADS"):
    os.environ.setdefault(_var, _threads)
