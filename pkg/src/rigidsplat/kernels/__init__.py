"""Hot numerical kernels with a compiled fast path and a numpy fallback.

The backend is chosen once at import time from the RIGIDSPLAT_KERNELS
environment variable: "fast" requires the compiled extension, "numpy" forces
the fallback, and "auto" (default) prefers the extension when importable.
Both backends implement identical contracts; see numpy_backend docstrings.
"""

from __future__ import annotations

import os

from . import numpy_backend

_mode = os.environ.get("RIGIDSPLAT_KERNELS", "auto").strip().lower()
if _mode not in ("auto", "fast", "numpy"):
    raise ValueError(
        f"RIGIDSPLAT_KERNELS must be 'auto', 'fast' or 'numpy', got {_mode!r}"
    )

if _mode == "numpy":
    _impl = numpy_backend
    BACKEND = "numpy"
else:
    try:
        from . import _fast

        _impl = _fast
        BACKEND = "fast"
    except ImportError:
        if _mode == "fast":
            raise ImportError(
                "RIGIDSPLAT_KERNELS=fast but the compiled extension "
                "rigidsplat.kernels._fast is not available"
            )
        _impl = numpy_backend
        BACKEND = "numpy"

if BACKEND == "fast":
    import numpy as _np

    def _f(a):
        return _np.ascontiguousarray(a, dtype=_np.float64)

    def _i(a):
        return _np.ascontiguousarray(a, dtype=_np.int64)

    def blend_forward(mu, q, apos, aquat, atrans, nbr, w):
        return _impl.blend_forward(_f(mu), _f(q), _f(apos), _f(aquat),
                                   _f(atrans), _i(nbr), _f(w))

    def blend_backward(mu, q, apos, aquat, atrans, nbr, w, gmu_p, gq_p):
        return _impl.blend_backward(_f(mu), _f(q), _f(apos), _f(aquat),
                                    _f(atrans), _i(nbr), _f(w), _f(gmu_p),
                                    _f(gq_p))

    def deform_loss_grad(mu_p, ids, target, conf, fx, fy, cx, cy, camR, camt):
        return _impl.deform_loss_grad(_f(mu_p), _i(ids), _f(target), _f(conf),
                                      float(fx), float(fy), float(cx),
                                      float(cy), _f(camR), _f(camt))

    def group_loss_grad(mu0, rot0, mu_p, q_p, pair_i, pair_j, pair_w):
        return _impl.group_loss_grad(_f(mu0), _f(rot0), _f(mu_p), _f(q_p),
                                     _i(pair_i), _i(pair_j), _f(pair_w))

    def arap_loss_grad(apos, aquat, atrans, edge_i, edge_k):
        return _impl.arap_loss_grad(_f(apos), _f(aquat), _f(atrans),
                                    _i(edge_i), _i(edge_k))

    def rigidity_scores(mu0, rot0, mu_p, rot_p, cand, members):
        return _impl.rigidity_scores(_f(mu0), _f(rot0), _f(mu_p), _f(rot_p),
                                     cand, members)
else:
    blend_forward = _impl.blend_forward
    blend_backward = _impl.blend_backward
    deform_loss_grad = _impl.deform_loss_grad
    group_loss_grad = _impl.group_loss_grad
    arap_loss_grad = _impl.arap_loss_grad
    rigidity_scores = _impl.rigidity_scores

__all__ = [
    "BACKEND",
    "blend_forward",
    "blend_backward",
    "deform_loss_grad",
    "group_loss_grad",
    "arap_loss_grad",
    "rigidity_scores",
    "numpy_backend",
]
