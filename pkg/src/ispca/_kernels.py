"""Hot inner loops, each in a numba and a plain-numpy flavour.

Set ``ISPCA_NO_NUMBA=1`` (before import) to force the numpy path. Both
flavours are always importable under explicit names so the benchmark and the
tests can compare them.
"""
import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

USING_NUMBA = numba is not None and os.environ.get("ISPCA_NO_NUMBA", "0") in ("", "0")

def _njit(fn):
    if numba is None:  # pragma: no cover
        return fn
    return numba.njit(cache=True, nogil=True)(fn)


# ---------------------------------------------------------------- numpy path

def soft_threshold(a, delta):
    return np.sign(a) * np.maximum(np.abs(a) - delta, 0.0)


def _ratio_numpy(m, q, d):
    t = m[:q] - d
    den = np.sqrt(np.dot(t, t))
    return t.sum() / den if den > 0.0 else 0.0


def l1_project_numpy(a, c):
    """Unit-norm soft-thresholded ``a`` whose l1 norm is at most ``c``.

    Returns ``(v, delta)``. The l1/l2 ratio of ``soft_threshold(a, d)`` falls
    as d grows. delta is bracketed between two consecutive sorted magnitudes
    by bisection, solved in closed form on that segment, and nudged up by a
    short bisection if rounding left it infeasible.
    """
    scale = np.abs(a).max() if a.size else 0.0
    if scale == 0.0:
        return np.zeros_like(a), 0.0
    a = a / scale  # the direction is scale-free; this avoids under/overflow
    nrm = np.sqrt(np.dot(a, a))
    if np.abs(a).sum() / nrm <= c:
        return a / nrm, 0.0
    p = a.size
    m = np.append(np.sort(np.abs(a))[::-1], 0.0)
    lo, hi = 0, p - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if _ratio_numpy(m, mid + 1, m[mid + 1]) > c:
            hi = mid
        else:
            lo = mid + 1
    q = lo + 1
    mean = m[:q].mean()
    # centred sum of squares keeps near-tied magnitudes accurate
    ss = np.dot(m[:q] - mean, m[:q] - mean)
    delta = min(max(mean - c * np.sqrt(ss / (q * (q - c * c))), m[q]), m[lo])
    if _ratio_numpy(m, q, m[lo]) >= c * (1.0 - 1e-12):
        delta = m[lo]  # the bound binds at the breakpoint itself
    elif _ratio_numpy(m, q, delta) > c:
        dlo, dhi = delta, m[lo]
        for _ in range(64):
            mid = 0.5 * (dlo + dhi)
            if mid <= dlo or mid >= dhi:
                break
            if _ratio_numpy(m, q, mid) > c:
                dlo = mid
            else:
                dhi = mid
        delta = dhi
    s = soft_threshold(a, delta)
    sn = np.sqrt(np.dot(s, s))
    if sn == 0.0:
        # tied maxima: the only feasible direction left is a single coordinate
        j = np.argmax(np.abs(a))
        s = np.zeros_like(a)
        s[j] = np.sign(a[j])
        return s, delta * scale
    return s / sn, delta * scale


def pmd_loop_numpy(X, v, c, max_iter, tol):
    """Alternating u/v updates for the rank-1 l1-constrained decomposition.

    Returns ``(u, v, d, n_iter, converged, history)`` where ``history`` holds
    the objective ``u^T X v`` after every v-update (plus the final value).
    Converged means the objective gained at most ``tol`` relative in one step.
    """
    history = np.empty(max_iter + 1)
    u = np.zeros(X.shape[0])
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        xv = X @ v
        xn = np.sqrt(np.dot(xv, xv))
        if xn == 0.0:
            return u, v, 0.0, it, False, history[: it - 1]
        u = xv / xn
        a = X.T @ u
        v_new, _ = l1_project_numpy(a, c)
        history[it - 1] = np.dot(a, v_new)
        v = v_new
        if it > 1 and history[it - 1] - history[it - 2] <= tol * abs(history[it - 1]):
            converged = True
            break
    xv = X @ v
    d = np.sqrt(np.dot(xv, xv))
    if d > 0.0:
        u = xv / d
    history[it] = d
    return u, v, d, it, converged, history[: it + 1]


def components_numpy(absr, threshold):
    """Root label per variable for the graph with edges ``absr[i, j] > threshold``."""
    p = absr.shape[0]
    parent = list(range(p))

    def find(i):
        root = i
        while parent[root] != root:
            root = parent[root]
        while parent[i] != root:
            parent[i], i = root, parent[i]
        return root

    ii, jj = np.nonzero(np.triu(absr > threshold, 1))
    for i, j in zip(ii.tolist(), jj.tolist()):
        ri, rj = find(i), find(j)
        if ri != rj:
            # smaller index becomes the root
            if ri < rj:
                parent[rj] = ri
            else:
                parent[ri] = rj
    return np.array([find(i) for i in range(p)], dtype=np.int64)


def _start_vector(m):
    return 1.0 / np.sqrt(1.0 + np.arange(m, dtype=np.float64))


def power_norm_numpy(M, max_iter, tol):
    """Largest singular value of ``M`` by power iteration on ``M^T M``.

    Returns ``(sigma, n_iter, converged)``.
    """
    x = _start_vector(M.shape[1])
    x /= np.sqrt(np.dot(x, x))
    s_old = -1.0
    for it in range(1, max_iter + 1):
        y = M.T @ (M @ x)
        s = np.dot(x, y)
        yn = np.sqrt(np.dot(y, y))
        if yn == 0.0:
            return 0.0, it, True
        x = y / yn
        if abs(s - s_old) <= tol * s:
            return np.sqrt(s), it, True
        s_old = s
    return np.sqrt(max(s_old, 0.0)), max_iter, False


# ---------------------------------------------------------------- numba path

@_njit
def _ratio_numba(m, q, d):
    l1 = 0.0
    l2 = 0.0
    for i in range(q):
        t = m[i] - d
        l1 += t
        l2 += t * t
    if l2 <= 0.0:
        return 0.0
    return l1 / np.sqrt(l2)


@_njit
def l1_project_numba(a, c):
    p = a.shape[0]
    out = np.zeros(p)
    scale = 0.0
    for i in range(p):
        if abs(a[i]) > scale:
            scale = abs(a[i])
    if scale == 0.0:
        return out, 0.0
    a = a / scale
    l1 = 0.0
    l2 = 0.0
    for i in range(p):
        x = abs(a[i])
        l1 += x
        l2 += x * x
    nrm = np.sqrt(l2)
    if l1 / nrm <= c:
        for i in range(p):
            out[i] = a[i] / nrm
        return out, 0.0
    m = np.zeros(p + 1)
    m[:p] = np.sort(np.abs(a))[::-1]
    lo = 0
    hi = p - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if _ratio_numba(m, mid + 1, m[mid + 1]) > c:
            hi = mid
        else:
            lo = mid + 1
    q = lo + 1
    mean = 0.0
    for i in range(q):
        mean += m[i]
    mean /= q
    ss = 0.0
    for i in range(q):
        ss += (m[i] - mean) * (m[i] - mean)
    delta = min(max(mean - c * np.sqrt(ss / (q * (q - c * c))), m[q]), m[lo])
    if _ratio_numba(m, q, m[lo]) >= c * (1.0 - 1e-12):
        delta = m[lo]
    elif _ratio_numba(m, q, delta) > c:
        dlo = delta
        dhi = m[lo]
        for _ in range(64):
            mid = 0.5 * (dlo + dhi)
            if mid <= dlo or mid >= dhi:
                break
            if _ratio_numba(m, q, mid) > c:
                dlo = mid
            else:
                dhi = mid
        delta = dhi
    ss = 0.0
    for i in range(p):
        t = abs(a[i]) - delta
        if t > 0.0:
            out[i] = t if a[i] > 0 else -t
            ss += t * t
    if ss == 0.0:
        j = 0
        for i in range(p):
            if abs(a[i]) > abs(a[j]):
                j = i
        out[j] = 1.0 if a[j] > 0 else -1.0
        return out, delta * scale
    sn = np.sqrt(ss)
    for i in range(p):
        out[i] /= sn
    return out, delta * scale


@_njit
def pmd_loop_numba(X, v, c, max_iter, tol):
    n, p = X.shape
    history = np.empty(max_iter + 1)
    u = np.zeros(n)
    xt = np.ascontiguousarray(X.T)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        xv = X @ v
        xn = np.sqrt(np.dot(xv, xv))
        if xn == 0.0:
            return u, v, 0.0, it, False, history[: it - 1]
        u = xv / xn
        a = xt @ u
        v_new, _ = l1_project_numba(a, c)
        history[it - 1] = np.dot(a, v_new)
        v = v_new
        if it > 1 and history[it - 1] - history[it - 2] <= tol * abs(history[it - 1]):
            converged = True
            break
    xv = X @ v
    d = np.sqrt(np.dot(xv, xv))
    if d > 0.0:
        u = xv / d
    history[it] = d
    return u, v, d, it, converged, history[: it + 1]


@_njit
def _find(parent, i):
    root = i
    while parent[root] != root:
        root = parent[root]
    while parent[i] != root:
        nxt = parent[i]
        parent[i] = root
        i = nxt
    return root


@_njit
def components_numba(absr, threshold):
    p = absr.shape[0]
    parent = np.arange(p)
    for i in range(p):
        for j in range(i + 1, p):
            if absr[i, j] > threshold:
                ri = _find(parent, i)
                rj = _find(parent, j)
                if ri < rj:
                    parent[rj] = ri
                elif rj < ri:
                    parent[ri] = rj
    out = np.empty(p, dtype=np.int64)
    for i in range(p):
        out[i] = _find(parent, i)
    return out


@_njit
def power_norm_numba(M, max_iter, tol):
    m = M.shape[1]
    x = np.empty(m)
    for i in range(m):
        x[i] = 1.0 / np.sqrt(1.0 + i)
    x /= np.sqrt(np.dot(x, x))
    mt = np.ascontiguousarray(M.T)
    s_old = -1.0
    for it in range(1, max_iter + 1):
        y = mt @ (M @ x)
        s = np.dot(x, y)
        yn = np.sqrt(np.dot(y, y))
        if yn == 0.0:
            return 0.0, it, True
        x = y / yn
        if abs(s - s_old) <= tol * s:
            return np.sqrt(s), it, True
        s_old = s
    return np.sqrt(max(s_old, 0.0)), max_iter, False


if USING_NUMBA:
    l1_project = l1_project_numba
    pmd_loop = pmd_loop_numba
    components = components_numba
    power_norm = power_norm_numba
else:
    l1_project = l1_project_numpy
    pmd_loop = pmd_loop_numpy
    components = components_numpy
    power_norm = power_norm_numpy
