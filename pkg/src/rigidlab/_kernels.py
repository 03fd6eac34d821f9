"""Hot per-node kernels with a numba path and a pure-numpy fallback.

The backend is chosen at import time from ``RIGIDLAB_NO_NUMBA`` (set to 1 to
force numpy) and can be switched at runtime with :func:`set_backend`.  Both
paths compute the same quantities node by node; reductions happen outside the
kernels with numpy's pairwise summation so results do not depend on the path
beyond rounding.
"""
from __future__ import annotations

import os

import numpy as np

try:
    import numba
    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    _HAVE_NUMBA = False

_DISABLED = os.environ.get("RIGIDLAB_NO_NUMBA", "").strip().lower() in ("1", "true", "yes")
_backend = "numba" if (_HAVE_NUMBA and not _DISABLED) else "numpy"


def get_backend() -> str:
    return _backend


def set_backend(name: str) -> None:
    global _backend
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not _HAVE_NUMBA:
        raise RuntimeError("numba is not installed")
    _backend = name


def numba_available() -> bool:
    return _HAVE_NUMBA


# ---------------------------------------------------------------------------
# fundamental forms


def _ff_numpy(d1, d2):
    g11 = np.einsum("mn,mn->m", d1[:, 0], d1[:, 0])
    g12 = np.einsum("mn,mn->m", d1[:, 0], d1[:, 1])
    g22 = np.einsum("mn,mn->m", d1[:, 1], d1[:, 1])
    det = g11 * g22 - g12 * g12
    i11 = g22 / det
    i12 = -g12 / det
    i22 = g11 / det
    # tangential projection of each second derivative
    p1 = np.einsum("mkn,mn->mk", d2, d1[:, 0])
    p2 = np.einsum("mkn,mn->mk", d2, d1[:, 1])
    c1 = i11[:, None] * p1 + i12[:, None] * p2
    c2 = i12[:, None] * p1 + i22[:, None] * p2
    A = d2 - c1[:, :, None] * d1[:, None, 0, :] - c2[:, :, None] * d1[:, None, 1, :]
    H = i11[:, None] * A[:, 0] + 2.0 * i12[:, None] * A[:, 1] + i22[:, None] * A[:, 2]
    a11, a12, a22 = A[:, 0], A[:, 1], A[:, 2]
    s = lambda x, y: np.einsum("mn,mn->m", x, y)  # noqa: E731
    q11, q12, q22 = s(a11, a11), s(a11, a12), s(a11, a22)
    r12, r22, t22 = s(a12, a12), s(a12, a22), s(a22, a22)
    # |A|^2 = g^{ik} g^{jl} <A_ij, A_kl>
    sqA = (i11 * i11 * q11 + 4 * i11 * i12 * q12 + 2 * i12 * i12 * q22
           + 2 * i11 * i22 * r12 + 2 * i12 * i12 * r12
           + 4 * i12 * i22 * r22 + i22 * i22 * t22)
    sqH = s(H, H)
    A0 = np.empty_like(A)
    A0[:, 0] = a11 - 0.5 * g11[:, None] * H
    A0[:, 1] = a12 - 0.5 * g12[:, None] * H
    A0[:, 2] = a22 - 0.5 * g22[:, None] * H
    b11, b12, b22 = A0[:, 0], A0[:, 1], A0[:, 2]
    u11, u12, u22 = s(b11, b11), s(b11, b12), s(b11, b22)
    v12, v22, w22 = s(b12, b12), s(b12, b22), s(b22, b22)
    sqA0 = (i11 * i11 * u11 + 4 * i11 * i12 * u12 + 2 * i12 * i12 * u22
            + 2 * i11 * i22 * v12 + 2 * i12 * i12 * v12
            + 4 * i12 * i22 * v22 + i22 * i22 * w22)
    K = 0.5 * (sqH - sqA)
    g = np.stack([g11, g12, g22], axis=1)
    sq = np.stack([sqA, sqA0, sqH], axis=1)
    return g, A, H, A0, sq, K


def _ff_loop(d1, d2):
    m, n = d1.shape[0], d1.shape[2]
    g = np.empty((m, 3))
    A = np.empty((m, 3, n))
    H = np.empty((m, n))
    A0 = np.empty((m, 3, n))
    sq = np.empty((m, 3))
    K = np.empty(m)
    for i in range(m):
        g11 = 0.0
        g12 = 0.0
        g22 = 0.0
        for c in range(n):
            g11 += d1[i, 0, c] * d1[i, 0, c]
            g12 += d1[i, 0, c] * d1[i, 1, c]
            g22 += d1[i, 1, c] * d1[i, 1, c]
        det = g11 * g22 - g12 * g12
        i11 = g22 / det
        i12 = -g12 / det
        i22 = g11 / det
        for k in range(3):
            p1 = 0.0
            p2 = 0.0
            for c in range(n):
                p1 += d2[i, k, c] * d1[i, 0, c]
                p2 += d2[i, k, c] * d1[i, 1, c]
            c1 = i11 * p1 + i12 * p2
            c2 = i12 * p1 + i22 * p2
            for c in range(n):
                A[i, k, c] = d2[i, k, c] - c1 * d1[i, 0, c] - c2 * d1[i, 1, c]
        sqh = 0.0
        for c in range(n):
            h = i11 * A[i, 0, c] + 2.0 * i12 * A[i, 1, c] + i22 * A[i, 2, c]
            H[i, c] = h
            sqh += h * h
            A0[i, 0, c] = A[i, 0, c] - 0.5 * g11 * h
            A0[i, 1, c] = A[i, 1, c] - 0.5 * g12 * h
            A0[i, 2, c] = A[i, 2, c] - 0.5 * g22 * h
        q11 = q12 = q22 = r12 = r22 = t22 = 0.0
        u11 = u12 = u22 = v12 = v22 = w22 = 0.0
        for c in range(n):
            a1 = A[i, 0, c]
            a2 = A[i, 1, c]
            a3 = A[i, 2, c]
            q11 += a1 * a1
            q12 += a1 * a2
            q22 += a1 * a3
            r12 += a2 * a2
            r22 += a2 * a3
            t22 += a3 * a3
            b1 = A0[i, 0, c]
            b2 = A0[i, 1, c]
            b3 = A0[i, 2, c]
            u11 += b1 * b1
            u12 += b1 * b2
            u22 += b1 * b3
            v12 += b2 * b2
            v22 += b2 * b3
            w22 += b3 * b3
        sqa = (i11 * i11 * q11 + 4 * i11 * i12 * q12 + 2 * i12 * i12 * q22
               + 2 * i11 * i22 * r12 + 2 * i12 * i12 * r12
               + 4 * i12 * i22 * r22 + i22 * i22 * t22)
        sqa0 = (i11 * i11 * u11 + 4 * i11 * i12 * u12 + 2 * i12 * i12 * u22
                + 2 * i11 * i22 * v12 + 2 * i12 * i12 * v12
                + 4 * i12 * i22 * v22 + i22 * i22 * w22)
        g[i, 0] = g11
        g[i, 1] = g12
        g[i, 2] = g22
        sq[i, 0] = sqa
        sq[i, 1] = sqa0
        sq[i, 2] = sqh
        K[i] = 0.5 * (sqh - sqa)
    return g, A, H, A0, sq, K


# ---------------------------------------------------------------------------
# Moebius action on 2-jets


def _push_numpy(pos, d1, d2, x0, has_inv, R, lam, t):
    if has_inv:
        d = pos - x0
        r2 = np.einsum("mn,mn->m", d, d)
        y = x0 + d / r2[:, None]
        # D I applied to a tangent vector v: (v - 2 dhat (dhat.v)) / |d|^2
        dv = np.einsum("mn,mkn->mk", d, d1)
        e1 = (d1 - 2.0 * d[:, None, :] * (dv / r2[:, None])[:, :, None]) / r2[:, None, None]
        dw = np.einsum("mn,mkn->mk", d, d2)
        lin = (d2 - 2.0 * d[:, None, :] * (dw / r2[:, None])[:, :, None]) / r2[:, None, None]
        pairs = ((0, 0), (0, 1), (1, 1))
        r4 = (r2 * r2)[:, None]
        r6 = (r4[:, 0] * r2)[:, None]
        quad = np.empty_like(d2)
        for k, (a, b) in enumerate(pairs):
            ua, ub = d1[:, a], d1[:, b]
            du = dv[:, a][:, None]
            dvv = dv[:, b][:, None]
            uv = np.einsum("mn,mn->m", ua, ub)[:, None]
            quad[:, k] = ((-2.0 * ua * dvv - 2.0 * ub * du - 2.0 * d * uv) / r4
                          + 8.0 * d * du * dvv / r6)
        e2 = lin + quad
    else:
        y, e1, e2 = pos, d1, d2
    M = lam * R
    return (y @ M.T + t, e1 @ M.T, e2 @ M.T)


def _push_loop(pos, d1, d2, x0, has_inv, R, lam, t):
    m, n = pos.shape
    y = np.empty((m, n))
    e1 = np.empty((m, 2, n))
    e2 = np.empty((m, 3, n))
    tmp = np.empty(n)
    for i in range(m):
        if has_inv:
            r2 = 0.0
            for c in range(n):
                tmp[c] = pos[i, c] - x0[c]
                r2 += tmp[c] * tmp[c]
            r4 = r2 * r2
            r6 = r4 * r2
            for c in range(n):
                y[i, c] = x0[c] + tmp[c] / r2
            du0 = 0.0
            du1 = 0.0
            for c in range(n):
                du0 += tmp[c] * d1[i, 0, c]
                du1 += tmp[c] * d1[i, 1, c]
            for c in range(n):
                e1[i, 0, c] = (d1[i, 0, c] - 2.0 * tmp[c] * du0 / r2) / r2
                e1[i, 1, c] = (d1[i, 1, c] - 2.0 * tmp[c] * du1 / r2) / r2
            for k in range(3):
                a = 0 if k < 2 else 1
                b = 0 if k == 0 else 1
                dw = 0.0
                uv = 0.0
                for c in range(n):
                    dw += tmp[c] * d2[i, k, c]
                    uv += d1[i, a, c] * d1[i, b, c]
                da = du0 if a == 0 else du1
                db = du0 if b == 0 else du1
                for c in range(n):
                    e2[i, k, c] = ((d2[i, k, c] - 2.0 * tmp[c] * dw / r2) / r2
                                   + (-2.0 * d1[i, a, c] * db - 2.0 * d1[i, b, c] * da
                                      - 2.0 * tmp[c] * uv) / r4
                                   + 8.0 * tmp[c] * da * db / r6)
        else:
            for c in range(n):
                y[i, c] = pos[i, c]
                for k in range(2):
                    e1[i, k, c] = d1[i, k, c]
                for k in range(3):
                    e2[i, k, c] = d2[i, k, c]
    out0 = np.empty((m, n))
    out1 = np.empty((m, 2, n))
    out2 = np.empty((m, 3, n))
    for i in range(m):
        for r in range(n):
            s0 = 0.0
            for c in range(n):
                s0 += R[r, c] * y[i, c]
            out0[i, r] = lam * s0 + t[r]
            for k in range(2):
                s1 = 0.0
                for c in range(n):
                    s1 += R[r, c] * e1[i, k, c]
                out1[i, k, r] = lam * s1
            for k in range(3):
                s2 = 0.0
                for c in range(n):
                    s2 += R[r, c] * e2[i, k, c]
                out2[i, k, r] = lam * s2
    return out0, out1, out2


# ---------------------------------------------------------------------------
# weighted Sobolev integrand: (|h|^2, |Dh|^2, |D^2 h|^2) * e^{-2u}


def _sobolev_numpy(h0, h1, h2, ew):
    z = np.einsum("mn,mn->m", h0, h0)
    o = np.einsum("mkn,mkn->m", h1, h1)
    s = (np.einsum("mn,mn->m", h2[:, 0], h2[:, 0]) + 2.0 * np.einsum("mn,mn->m", h2[:, 1], h2[:, 1])
         + np.einsum("mn,mn->m", h2[:, 2], h2[:, 2]))
    return np.stack([z * ew, o * ew, s * ew], axis=1)


def _sobolev_loop(h0, h1, h2, ew):
    m, n = h0.shape
    out = np.empty((m, 3))
    for i in range(m):
        z = 0.0
        o = 0.0
        s = 0.0
        for c in range(n):
            z += h0[i, c] * h0[i, c]
            o += h1[i, 0, c] * h1[i, 0, c] + h1[i, 1, c] * h1[i, 1, c]
            s += h2[i, 0, c] * h2[i, 0, c] + 2.0 * h2[i, 1, c] * h2[i, 1, c] + h2[i, 2, c] * h2[i, 2, c]
        out[i, 0] = z * ew[i]
        out[i, 1] = o * ew[i]
        out[i, 2] = s * ew[i]
    return out


# ---------------------------------------------------------------------------
# triangle corner angles


def _angles_numpy(V, T):
    out = np.empty((T.shape[0], 3))
    for k in range(3):
        p = V[T[:, k]]
        a = V[T[:, (k + 1) % 3]] - p
        b = V[T[:, (k + 2) % 3]] - p
        a = a / np.linalg.norm(a, axis=1)[:, None]
        b = b / np.linalg.norm(b, axis=1)[:, None]
        out[:, k] = 2.0 * np.arctan2(np.linalg.norm(a - b, axis=1), np.linalg.norm(a + b, axis=1))
    return out


def _angles_loop(V, T):
    f = T.shape[0]
    n = V.shape[1]
    out = np.empty((f, 3))
    for i in range(f):
        for k in range(3):
            p = T[i, k]
            q = T[i, (k + 1) % 3]
            r = T[i, (k + 2) % 3]
            na = 0.0
            nb = 0.0
            for c in range(n):
                na += (V[q, c] - V[p, c]) ** 2
                nb += (V[r, c] - V[p, c]) ** 2
            na = np.sqrt(na)
            nb = np.sqrt(nb)
            dm = 0.0
            dp = 0.0
            for c in range(n):
                x = (V[q, c] - V[p, c]) / na
                y = (V[r, c] - V[p, c]) / nb
                dm += (x - y) ** 2
                dp += (x + y) ** 2
            out[i, k] = 2.0 * np.arctan2(np.sqrt(dm), np.sqrt(dp))
    return out


if _HAVE_NUMBA:
    _ff_nb = numba.njit(cache=True)(_ff_loop)
    _push_nb = numba.njit(cache=True)(_push_loop)
    _sobolev_nb = numba.njit(cache=True)(_sobolev_loop)
    _angles_nb = numba.njit(cache=True)(_angles_loop)


def _c(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def fundamental_forms_kernel(d1, d2):
    """Per-node metric, second fundamental form and curvature scalars.

    ``d1`` is (M, 2, n) and ``d2`` is (M, 3, n).  Returns ``g`` (M, 3) as
    (g11, g12, g22), ``A`` and ``A0`` (M, 3, n), ``H`` (M, n), ``sq`` (M, 3)
    holding (|A|^2, |A0|^2, |H|^2) and ``K`` (M,).
    """
    d1, d2 = _c(d1), _c(d2)
    if _backend == "numba":
        return _ff_nb(d1, d2)
    return _ff_numpy(d1, d2)


def moebius_push_kernel(pos, d1, d2, x0, has_inv, R, lam, t):
    pos, d1, d2 = _c(pos), _c(d1), _c(d2)
    x0 = _c(x0 if x0 is not None else np.zeros(pos.shape[1]))
    R, t = _c(R), _c(t)
    if _backend == "numba":
        return _push_nb(pos, d1, d2, x0, bool(has_inv), R, float(lam), t)
    return _push_numpy(pos, d1, d2, x0, bool(has_inv), R, float(lam), t)


def sobolev_kernel(h0, h1, h2, ew):
    h0, h1, h2, ew = _c(h0), _c(h1), _c(h2), _c(ew)
    if _backend == "numba":
        return _sobolev_nb(h0, h1, h2, ew)
    return _sobolev_numpy(h0, h1, h2, ew)


def corner_angles_kernel(V, T):
    V = _c(V)
    T = np.ascontiguousarray(T, dtype=np.int64)
    if _backend == "numba":
        return _angles_nb(V, T)
    return _angles_numpy(V, T)
