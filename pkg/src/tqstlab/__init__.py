"""Desk-scale photonic state generation and threshold quantum state
tomography toolkit: interferometer model, post-selected dual-rail state
generation with realistic noise, and tQST/QST reconstruction with
projector-count and fidelity reporting."""

import os

# Every dense operation here is on tiny matrices (dim <= 16 states,
# 8-mode meshes); threaded BLAS pools lose ~50x to synchronization on
# them. Applied before numpy loads; explicit settings win.
for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

__version__ = "0.1.0"
