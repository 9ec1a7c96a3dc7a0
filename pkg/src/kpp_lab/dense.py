"""Small dense eigensolver: Householder Hessenberg reduction + Francis double-shift QR.

Used as an independent oracle for the sparse power iterations and for the
per-mode ``n x n`` stability matrices.  Eigenvalues only; intended for
matrices up to a few hundred rows.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ConvergenceError

MAX_DENSE = 400


def hessenberg(A) -> np.ndarray:
    """Upper Hessenberg matrix orthogonally similar to ``A``."""
    H = np.array(A, dtype=float, copy=True)
    n = H.shape[0]
    for k in range(n - 2):
        x = H[k + 1:, k].copy()
        alpha = np.linalg.norm(x)
        if alpha == 0.0:
            continue
        v = x
        v[0] += math.copysign(alpha, x[0])
        v /= np.linalg.norm(v)
        H[k + 1:, :] -= 2.0 * np.outer(v, v @ H[k + 1:, :])
        H[:, k + 1:] -= 2.0 * np.outer(H[:, k + 1:] @ v, v)
        H[k + 2:, k] = 0.0
    return H


def _sign(a, b):
    return abs(a) if b >= 0 else -abs(a)


def hqr(H, max_its: int = 60) -> np.ndarray:
    """Eigenvalues of an upper Hessenberg matrix by the shifted QR algorithm."""
    n = H.shape[0]
    # 1-based working copy keeps the classic index bookkeeping readable
    a = np.zeros((n + 1, n + 1))
    a[1:, 1:] = H
    wr = np.zeros(n + 1)
    wi = np.zeros(n + 1)
    anorm = 0.0
    for i in range(1, n + 1):
        anorm += np.abs(a[i, max(i - 1, 1):]).sum()
    nn = n
    t = 0.0
    x = y = z = w = p = q = r = s = 0.0
    while nn >= 1:
        its = 0
        while True:
            l = nn
            while l >= 2:
                s = abs(a[l - 1, l - 1]) + abs(a[l, l])
                if s == 0.0:
                    s = anorm
                if abs(a[l, l - 1]) + s == s:
                    a[l, l - 1] = 0.0
                    break
                l -= 1
            x = a[nn, nn]
            if l == nn:
                wr[nn] = x + t
                wi[nn] = 0.0
                nn -= 1
            else:
                y = a[nn - 1, nn - 1]
                w = a[nn, nn - 1] * a[nn - 1, nn]
                if l == nn - 1:
                    p = 0.5 * (y - x)
                    q = p * p + w
                    z = math.sqrt(abs(q))
                    x += t
                    if q >= 0.0:
                        z = p + _sign(z, p)
                        wr[nn - 1] = wr[nn] = x + z
                        if z:
                            wr[nn] = x - w / z
                        wi[nn - 1] = wi[nn] = 0.0
                    else:
                        wr[nn - 1] = wr[nn] = x + p
                        wi[nn - 1] = -z
                        wi[nn] = z
                    nn -= 2
                else:
                    if its == max_its:
                        raise ConvergenceError("QR iteration did not converge", iterations=its)
                    if its and its % 10 == 0:
                        # exceptional shift
                        t += x
                        for i in range(1, nn + 1):
                            a[i, i] -= x
                        s = abs(a[nn, nn - 1]) + abs(a[nn - 1, nn - 2])
                        y = x = 0.75 * s
                        w = -0.4375 * s * s
                    its += 1
                    m = nn - 2
                    while m >= l:
                        z = a[m, m]
                        r = x - z
                        s = y - z
                        p = (r * s - w) / a[m + 1, m] + a[m, m + 1]
                        q = a[m + 1, m + 1] - z - r - s
                        r = a[m + 2, m + 1]
                        s = abs(p) + abs(q) + abs(r)
                        p /= s
                        q /= s
                        r /= s
                        if m == l:
                            break
                        u = abs(a[m, m - 1]) * (abs(q) + abs(r))
                        v = abs(p) * (abs(a[m - 1, m - 1]) + abs(z) + abs(a[m + 1, m + 1]))
                        if u + v == v:
                            break
                        m -= 1
                    for i in range(m + 2, nn + 1):
                        a[i, i - 2] = 0.0
                        if i != m + 2:
                            a[i, i - 3] = 0.0
                    for k in range(m, nn):
                        if k != m:
                            p = a[k, k - 1]
                            q = a[k + 1, k - 1]
                            r = a[k + 2, k - 1] if k != nn - 1 else 0.0
                            x = abs(p) + abs(q) + abs(r)
                            if x != 0.0:
                                p /= x
                                q /= x
                                r /= x
                        s = _sign(math.sqrt(p * p + q * q + r * r), p)
                        if s != 0.0:
                            if k == m:
                                if l != m:
                                    a[k, k - 1] = -a[k, k - 1]
                            else:
                                a[k, k - 1] = -s * x
                            p += s
                            x = p / s
                            y = q / s
                            z = r / s
                            q /= p
                            r /= p
                            # row transformation on columns k..nn
                            rows = a[k, k:nn + 1] + q * a[k + 1, k:nn + 1]
                            if k != nn - 1:
                                rows = rows + r * a[k + 2, k:nn + 1]
                                a[k + 2, k:nn + 1] -= rows * z
                            a[k + 1, k:nn + 1] -= rows * y
                            a[k, k:nn + 1] -= rows * x
                            # column transformation on rows l..min(nn, k+3)
                            mmin = min(nn, k + 3)
                            cols = x * a[l:mmin + 1, k] + y * a[l:mmin + 1, k + 1]
                            if k != nn - 1:
                                cols = cols + z * a[l:mmin + 1, k + 2]
                                a[l:mmin + 1, k + 2] -= cols * r
                            a[l:mmin + 1, k + 1] -= cols * q
                            a[l:mmin + 1, k] -= cols
            if not (l < nn - 1):
                break
    return wr[1:] + 1j * wi[1:]


def eigvals(A) -> np.ndarray:
    """All eigenvalues of a real square matrix (complex array, unsorted)."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("square matrix required")
    if A.shape[0] > MAX_DENSE:
        raise ValueError(f"dense eigensolver limited to {MAX_DENSE} rows")
    if A.shape[0] == 0:
        return np.zeros(0, dtype=complex)
    if A.shape[0] == 2:
        return eigvals_2x2(A)
    return hqr(hessenberg(A))


def eigvals_2x2(M) -> np.ndarray:
    """Closed form from trace and determinant."""
    M = np.asarray(M, dtype=float)
    tr = M[0, 0] + M[1, 1]
    det = M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0]
    half = 0.5 * (M[0, 0] - M[1, 1])
    disc = half * half + M[0, 1] * M[1, 0]
    if disc >= 0:
        root = math.sqrt(disc)
        big = 0.5 * tr + math.copysign(root, tr) if tr != 0 else root
        # avoid cancellation in the smaller root
        other = det / big if big != 0 else 0.5 * tr - root
        return np.array(sorted([big, other], reverse=True), dtype=complex)
    root = math.sqrt(-disc)
    return np.array([0.5 * tr + 1j * root, 0.5 * tr - 1j * root])


def rightmost(A) -> complex:
    """Eigenvalue with the largest real part."""
    ev = eigvals(A)
    return ev[np.argmax(ev.real)]


def leftmost_real(A) -> float:
    """Real part of the eigenvalue with the smallest real part."""
    ev = eigvals(A)
    return float(ev.real.min())
