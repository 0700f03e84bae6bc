"""Envelope (skyline) LDL^T kernels for symmetric matrices, real or complex.

Row ``i`` of the unit lower factor is stored densely from column
``first[i]`` through the diagonal at ``vals[ptr[i] : ptr[i+1]]``; the last
slot of each row holds the pivot ``D[i]`` after factorization.
"""

import numba
import numpy as np
import scipy.sparse as sp


def build_envelope(lower: sp.csr_matrix, dtype):
    """Scatter a lower-triangular CSR matrix into envelope storage."""
    n = lower.shape[0]
    indptr, indices = lower.indptr, lower.indices
    first = np.arange(n, dtype=np.int64)
    nonempty = np.diff(indptr) > 0
    first[nonempty] = np.minimum(indices[indptr[:-1][nonempty]], first[nonempty])
    lengths = np.arange(n) - first + 1
    ptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(lengths, out=ptr[1:])
    vals = np.zeros(ptr[-1], dtype=dtype)
    rows = np.repeat(np.arange(n), np.diff(indptr))
    vals[ptr[rows] + indices - first[rows]] = lower.data
    return first, ptr, vals


@numba.njit(cache=True)
def ldlt_factor(first, ptr, vals):
    """In-place LDL^T. Returns the index of the first zero pivot, or -1."""
    n = first.shape[0]
    for i in range(n):
        fi = first[i]
        pi = ptr[i]
        # u_j = L[i, j] * D[j], built left to right
        for j in range(fi, i):
            fj = first[j]
            pj = ptr[j]
            k0 = fi if fi > fj else fj
            s = vals[pi + j - fi]
            for k in range(k0, j):
                s -= vals[pi + k - fi] * vals[pj + k - fj]
            vals[pi + j - fi] = s
        d = vals[pi + i - fi]
        for j in range(fi, i):
            dj = vals[ptr[j + 1] - 1]
            u = vals[pi + j - fi]
            lij = u / dj
            vals[pi + j - fi] = lij
            d -= u * lij
        if d == 0:
            return i
        vals[pi + i - fi] = d
    return -1


@numba.njit(cache=True)
def lower_solve(first, ptr, vals, b):
    """Solve L y = b with the unit lower factor (in place on a copy)."""
    n = first.shape[0]
    y = b.copy()
    for i in range(n):
        fi = first[i]
        pi = ptr[i]
        s = y[i]
        for k in range(fi, i):
            s -= vals[pi + k - fi] * y[k]
        y[i] = s
    return y


@numba.njit(cache=True)
def upper_solve(first, ptr, vals, b):
    """Solve L^T x = b with the unit lower factor."""
    n = first.shape[0]
    x = b.copy()
    for i in range(n - 1, -1, -1):
        fi = first[i]
        pi = ptr[i]
        xi = x[i]
        for k in range(fi, i):
            x[k] -= vals[pi + k - fi] * xi
    return x


@numba.njit(cache=True)
def lower_mul(first, ptr, vals, v):
    n = first.shape[0]
    out = v.copy()
    for i in range(n):
        fi = first[i]
        pi = ptr[i]
        s = out[i]
        for k in range(fi, i):
            s += vals[pi + k - fi] * v[k]
        out[i] = s
    return out


@numba.njit(cache=True)
def upper_mul(first, ptr, vals, v):
    n = first.shape[0]
    out = v.copy()
    for i in range(n):
        fi = first[i]
        pi = ptr[i]
        vi = v[i]
        for k in range(fi, i):
            out[k] += vals[pi + k - fi] * vi
    return out


def pivots(ptr, vals):
    return vals[ptr[1:] - 1]
