"""Flat-form solver toolkit for a viscous surface wave in a horizontally periodic slab."""

import os as _os

# BLAS pools read these when numpy first loads, so the cap has to be set here.
if _os.environ.get("SLABWAVE_THREADS"):
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _os.environ["SLABWAVE_THREADS"])

from .grid import Config, Grid, make_grid, validate_config  # noqa: E402

__all__ = ["Config", "Grid", "make_grid", "validate_config"]
__version__ = "0.1.0"
