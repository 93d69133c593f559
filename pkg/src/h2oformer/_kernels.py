"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The backend is chosen once at import time from ``H2OFORMER_BACKEND``
(``numpy`` or ``numba``).  The default is ``numpy``: every kernel here is
a contraction, and the BLAS-backed fallback beats the explicit loops on a
single core (see ``benchmarks/bench_kernels.py``).  Both paths compute the
same sums; they agree with each other to rounding, and each is bitwise
reproducible with itself.
"""

from __future__ import annotations

import os

import numpy as np

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False


def _select_backend() -> str:
    requested = os.environ.get("H2OFORMER_BACKEND", "").strip().lower()
    if requested == "":
        return "numpy"
    if requested not in ("numba", "numpy"):
        raise ValueError(f"H2OFORMER_BACKEND must be 'numba' or 'numpy', got {requested!r}")
    if requested == "numba" and not HAVE_NUMBA:
        raise ImportError("H2OFORMER_BACKEND=numba but numba is not importable")
    return requested


BACKEND = _select_backend()


# ---------------------------------------------------------------------------
# numpy reference path
# ---------------------------------------------------------------------------

def conv_time_forward_np(xpad, w, dilation, t_out):
    """Temporal convolution over axis 1 of ``xpad`` (N, Tp, V, Ci)."""
    k = w.shape[0]
    out = xpad[:, 0:t_out] @ w[0]
    for tap in range(1, k):
        off = tap * dilation
        out += xpad[:, off:off + t_out] @ w[tap]
    return out


def conv_time_backward_np(xpad, w, g, dilation):
    k, ci, co = w.shape
    t_out = g.shape[1]
    dxpad = np.zeros_like(xpad)
    dw = np.empty_like(w)
    g2 = g.reshape(-1, co)
    for tap in range(k):
        off = tap * dilation
        dxpad[:, off:off + t_out] += g @ w[tap].T
        dw[tap] = xpad[:, off:off + t_out].reshape(-1, ci).T @ g2
    return dxpad, dw


def relpos_forward_np(q, r):
    """scores[b, h, i, j] = <q[b, h, i], r[h, i, j]>  for q (B, h, V, d), r (h, V, V, d)."""
    qt = q.transpose(1, 2, 0, 3)                      # h, V, B, d
    s = qt @ r.transpose(0, 1, 3, 2)                  # h, V, B, V
    return np.ascontiguousarray(s.transpose(2, 0, 1, 3))


def relpos_backward_np(q, r, g):
    gt = g.transpose(1, 2, 0, 3)                      # h, V(i), B, V(j)
    dq = (gt @ r).transpose(2, 0, 1, 3)               # B, h, V, d
    dr = gt.transpose(0, 1, 3, 2) @ q.transpose(1, 2, 0, 3)  # h, V, V, d
    return np.ascontiguousarray(dq), dr


def scatter_rows_np(g, idx, m):
    """Sum rows of ``g`` (n, c) into an (m, c) table at row ``idx[i]``."""
    out = np.zeros((m, g.shape[1]), dtype=g.dtype)
    np.add.at(out, idx, g)
    return out


# ---------------------------------------------------------------------------
# numba path
# ---------------------------------------------------------------------------

def _conv_time_forward_loops(xpad, w, dilation, t_out):
    n_b, _, n_v, n_ci = xpad.shape
    k, _, n_co = w.shape
    out = np.zeros((n_b, t_out, n_v, n_co), dtype=xpad.dtype)
    for b in range(n_b):
        for t in range(t_out):
            for tap in range(k):
                src = t + tap * dilation
                wt = w[tap]
                for v in range(n_v):
                    row = out[b, t, v]
                    for c in range(n_ci):
                        xv = xpad[b, src, v, c]
                        wr = wt[c]
                        for o in range(n_co):
                            row[o] += xv * wr[o]
    return out


def _conv_time_backward_loops(xpad, w, g, dilation):
    n_b, _, n_v, n_ci = xpad.shape
    k, _, n_co = w.shape
    t_out = g.shape[1]
    dxpad = np.zeros_like(xpad)
    dw = np.zeros_like(w)
    for b in range(n_b):
        for t in range(t_out):
            for tap in range(k):
                src = t + tap * dilation
                for v in range(n_v):
                    for c in range(n_ci):
                        xv = xpad[b, src, v, c]
                        acc = 0.0
                        for o in range(n_co):
                            go = g[b, t, v, o]
                            acc += go * w[tap, c, o]
                            dw[tap, c, o] += xv * go
                        dxpad[b, src, v, c] += acc
    return dxpad, dw


def _relpos_forward_loops(q, r):
    n_b, n_h, n_v, n_d = q.shape
    out = np.zeros((n_b, n_h, n_v, n_v), dtype=q.dtype)
    for b in range(n_b):
        for h in range(n_h):
            for i in range(n_v):
                for j in range(n_v):
                    acc = 0.0
                    for d in range(n_d):
                        acc += q[b, h, i, d] * r[h, i, j, d]
                    out[b, h, i, j] = acc
    return out


def _relpos_backward_loops(q, r, g):
    n_b, n_h, n_v, n_d = q.shape
    dq = np.zeros_like(q)
    dr = np.zeros_like(r)
    for b in range(n_b):
        for h in range(n_h):
            for i in range(n_v):
                for j in range(n_v):
                    gij = g[b, h, i, j]
                    for d in range(n_d):
                        dq[b, h, i, d] += gij * r[h, i, j, d]
                        dr[h, i, j, d] += gij * q[b, h, i, d]
    return dq, dr


def _scatter_rows_loops(g, idx, m):
    n, c = g.shape
    out = np.zeros((m, c), dtype=g.dtype)
    for i in range(n):
        row = idx[i]
        for j in range(c):
            out[row, j] += g[i, j]
    return out


if HAVE_NUMBA:
    _jit = numba.njit(cache=True, nogil=True)
    conv_time_forward_nb = _jit(_conv_time_forward_loops)
    conv_time_backward_nb = _jit(_conv_time_backward_loops)
    relpos_forward_nb = _jit(_relpos_forward_loops)
    relpos_backward_nb = _jit(_relpos_backward_loops)
    scatter_rows_nb = _jit(_scatter_rows_loops)
else:  # pragma: no cover
    conv_time_forward_nb = _conv_time_forward_loops
    conv_time_backward_nb = _conv_time_backward_loops
    relpos_forward_nb = _relpos_forward_loops
    relpos_backward_nb = _relpos_backward_loops
    scatter_rows_nb = _scatter_rows_loops


KERNELS = {
    "numpy": {
        "conv_time_forward": conv_time_forward_np,
        "conv_time_backward": conv_time_backward_np,
        "relpos_forward": relpos_forward_np,
        "relpos_backward": relpos_backward_np,
        "scatter_rows": scatter_rows_np,
    },
    "numba": {
        "conv_time_forward": conv_time_forward_nb,
        "conv_time_backward": conv_time_backward_nb,
        "relpos_forward": relpos_forward_nb,
        "relpos_backward": relpos_backward_nb,
        "scatter_rows": scatter_rows_nb,
    },
}


def get(name: str, backend: str | None = None):
    return KERNELS[backend or BACKEND][name]


def set_backend(name: str) -> str:
    """Switch the process-wide backend; returns the previous one."""
    global BACKEND
    if name not in KERNELS:
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise ImportError("numba is not importable")
    previous, BACKEND = BACKEND, name
    return previous
