"""Hot numeric kernels: a numba fast path and a pure-numpy fallback.

Backend selection is driven by the DEFECTRECON_BACKEND environment
variable: "numba", "numpy", or unset/"auto" (numba when importable,
numpy otherwise).  Both backends expose the same functions and produce
deterministic results: accumulation order is fixed, no parallel
reductions are used, so repeated runs are bit-identical within one
backend.

Exported kernels:
    accumulate(idx, weights, size)          scatter-add, fixed order
    tri_gradients(cells, grads, u)          per-triangle P1 gradients
    stiffness_action(cells, grads, area, coeff, u, n)
    pcg(indptr, indices, data, b, x0, invdiag, rtol, maxiter, deflate)
    mark_cells_crossed(nodes, cells, seg_a, seg_b)
    points_in_polygon(points, poly)
"""

import os

_choice = os.environ.get("DEFECTRECON_BACKEND", "auto").strip().lower() or "auto"
if _choice not in ("auto", "numpy", "numba"):
    raise RuntimeError(
        f"DEFECTRECON_BACKEND must be 'numpy', 'numba' or unset, got {_choice!r}")

if _choice == "numpy":
    from .numpy_backend import (accumulate, tri_gradients, stiffness_action,
                                pcg, mark_cells_crossed, points_in_polygon)
    BACKEND = "numpy"
else:
    try:
        from .numba_backend import (accumulate, tri_gradients, stiffness_action,
                                    pcg, mark_cells_crossed, points_in_polygon)
        BACKEND = "numba"
    except ImportError:
        if _choice == "numba":
            raise
        from .numpy_backend import (accumulate, tri_gradients, stiffness_action,
                                    pcg, mark_cells_crossed, points_in_polygon)
        BACKEND = "numpy"

__all__ = ["BACKEND", "accumulate", "tri_gradients", "stiffness_action",
           "pcg", "mark_cells_crossed", "points_in_polygon"]
