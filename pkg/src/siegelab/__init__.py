"""Numerical toolkit for Herman-curve puzzles of cubic Blaschke products."""

import os

__version__ = "0.1.0"

# SIEGELAB_THREADS caps BLAS/OpenMP pools; it only takes effect before numpy is first imported.
_cap = os.environ.get("SIEGELAB_THREADS")
if _cap:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
        os.environ.setdefault(_var, _cap)
