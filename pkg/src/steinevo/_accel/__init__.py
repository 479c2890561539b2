"""Backend selection for the hot numeric kernels.

``STEINEVO_BACKEND=numpy`` forces the pure-numpy path; the default is the
numba path whenever numba imports cleanly. The choice is fixed at import.
"""
import os

from . import _numpy

BACKEND = os.environ.get("STEINEVO_BACKEND", "numba").strip().lower()

if BACKEND not in ("numba", "numpy"):
    raise ImportError(f"STEINEVO_BACKEND must be 'numba' or 'numpy', got {BACKEND!r}")

if BACKEND == "numba":
    try:
        from . import _numba as _impl
    except ImportError:  # pragma: no cover
        BACKEND = "numpy"
        _impl = _numpy
else:
    _impl = _numpy

pairwise_sqdist = _impl.pairwise_sqdist
rbf_gram = _impl.rbf_gram
rbf_repulsion = _impl.rbf_repulsion
mmd2_vstat = _impl.mmd2_vstat
mlp_batch = _impl.mlp_batch
rollout_pendulum = _impl.rollout_pendulum
rollout_mountaincar = _impl.rollout_mountaincar

__all__ = [
    "BACKEND",
    "pairwise_sqdist",
    "rbf_gram",
    "rbf_repulsion",
    "mmd2_vstat",
    "mlp_batch",
    "rollout_pendulum",
    "rollout_mountaincar",
]
