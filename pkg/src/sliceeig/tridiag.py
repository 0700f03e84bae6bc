"""Symmetric tridiagonal eigensolver: implicit QL with Wilkinson-type shifts."""

import numba
import numpy as np

from .errors import ConvergenceError
from .matrix import TriDiag

_MAX_SWEEPS = 60


@numba.njit(cache=True)
def _tql(d, e, z, want_vectors, max_sweeps):
    # d: diagonal (overwritten by eigenvalues); e: off-diagonal padded to
    # length n with e[n-1] = 0; z: rows are eigenvector coordinates.
    n = d.shape[0]
    eps = np.finfo(np.float64).eps
    for l in range(n):
        sweeps = 0
        while True:
            m = l
            while m < n - 1:
                dd = abs(d[m]) + abs(d[m + 1])
                if abs(e[m]) <= eps * dd:
                    break
                m += 1
            if m == l:
                break
            if sweeps == max_sweeps:
                return l
            sweeps += 1
            g = (d[l + 1] - d[l]) / (2.0 * e[l])
            r = np.hypot(g, 1.0)
            g = d[m] - d[l] + e[l] / (g + (r if g >= 0 else -r))
            s = 1.0
            c = 1.0
            p = 0.0
            i = m - 1
            underflow = False
            while i >= l:
                f = s * e[i]
                b = c * e[i]
                r = np.hypot(f, g)
                e[i + 1] = r
                if r == 0.0:
                    d[i + 1] -= p
                    e[m] = 0.0
                    underflow = True
                    break
                s = f / r
                c = g / r
                g = d[i + 1] - p
                r = (d[i] - g) * s + 2.0 * c * b
                p = s * r
                d[i + 1] = g + p
                g = c * r - b
                if want_vectors:
                    for k in range(n):
                        f = z[i + 1, k]
                        z[i + 1, k] = s * z[i, k] + c * f
                        z[i, k] = c * z[i, k] - s * f
                i -= 1
            if underflow:
                continue
            d[l] -= p
            e[l] = g
            e[m] = 0.0
    return -1


def sym_tridiag_eig(T: TriDiag, want_vectors=True):
    """Eigenvalues (ascending) and optionally eigenvectors of a tridiagonal matrix.

    Parameters
    ----------
    T : TriDiag
        The symmetric tridiagonal matrix.
    want_vectors : bool
        Accumulate the orthonormal eigenvector matrix (columns).

    Returns
    -------
    evals : ndarray, shape (m,)
    evecs : ndarray, shape (m, m) or None
    """
    m = T.m
    d = T.alpha.copy()
    e = np.zeros(m)
    e[: m - 1] = T.beta
    z = np.eye(m) if want_vectors else np.zeros((1, 1))
    failed = _tql(d, e, z, want_vectors, _MAX_SWEEPS)
    if failed >= 0:
        raise ConvergenceError(f"QL iteration did not converge for eigenvalue {failed}")
    order = np.argsort(d, kind="stable")
    evals = d[order]
    if not want_vectors:
        return evals, None
    return evals, np.ascontiguousarray(z[order].T)
