"""Compiled scalar kernels for the per-candidate hot paths.

Every candidate runs through a handful of small polynomial computations. In
interpreted Python their call overhead dominates, so they are compiled with numba.
Polynomials are passed as ascending power-basis coefficients. A quintic trajectory
is a (3, 6) array with one row per axis.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

FEASIBLE = 0
INFEASIBLE = 1
INDETERMINATE = 2


# -- roots ----------------------------------------------------------------------


@njit(cache=True)
def quadratic_roots(a, b, c, out):
    """Real roots of a t^2 + b t + c into ``out`` (sorted); returns the count.

    A vanishing leading coefficient degrades to the linear case; the all-zero
    polynomial reports no roots and is left to the caller.
    """
    if a == 0.0:
        if b == 0.0:
            return 0
        out[0] = -c / b
        return 1
    disc = b * b - 4.0 * a * c
    if disc < 0.0:
        return 0
    if disc == 0.0:
        out[0] = -b / (2.0 * a)
        return 1
    sq = math.sqrt(disc)
    q = -0.5 * (b + math.copysign(sq, b))
    r1 = q / a
    r2 = c / q if q != 0.0 else -b / a - r1
    out[0] = min(r1, r2)
    out[1] = max(r1, r2)
    return 2


@njit(cache=True)
def _polish(a3, a2, a1, a0, t):
    best = t
    best_res = abs(((a3 * t + a2) * t + a1) * t + a0)
    for _ in range(4):
        if best_res == 0.0:
            break
        d = (3.0 * a3 * best + 2.0 * a2) * best + a1
        if d == 0.0:
            break
        cand = best - (((a3 * best + a2) * best + a1) * best + a0) / d
        res = abs(((a3 * cand + a2) * cand + a1) * cand + a0)
        if res >= best_res:
            break
        best = cand
        best_res = res
    return best


@njit(cache=True)
def _scaled_ratio(num, den_log, scale_log, power):
    """sign(num) * |num| / exp(den_log + power * scale_log), computed in logs to avoid overflow."""
    if num == 0.0:
        return 0.0
    return math.copysign(math.exp(math.log(abs(num)) - den_log - power * scale_log), num)


@njit(cache=True)
def _monic_cubic_closed_form(b, c, d, out):
    """Real roots of x^3 + b x^2 + c x + d (trigonometric or Cardano), unsorted."""
    shift = b / 3.0
    p = c - b * shift
    q = (2.0 * b * b * b) / 27.0 - b * c / 3.0 + d
    half_q = q / 2.0
    third_p = p / 3.0
    disc = half_q * half_q + third_p * third_p * third_p
    if p == 0.0 and q == 0.0:
        out[0] = -shift
        return 1
    if disc > 0.0:
        sq = math.sqrt(disc)
        u = -half_q + math.copysign(sq, -half_q)
        cu = math.copysign(abs(u) ** (1.0 / 3.0), u)
        y = cu - third_p / cu if cu != 0.0 else 0.0
        out[0] = y - shift
        return 1
    m = 2.0 * math.sqrt(-third_p)
    arg = 3.0 * q / (p * m) if p != 0.0 else 0.0
    theta = math.acos(max(-1.0, min(1.0, arg))) / 3.0
    for k in range(3):
        out[k] = m * math.cos(theta - 2.0 * math.pi * k / 3.0) - shift
    return 3


@njit(cache=True)
def _sort_merge(out, n):
    for k in range(1, n):
        x = out[k]
        m2 = k - 1
        while m2 >= 0 and out[m2] > x:
            out[m2 + 1] = out[m2]
            m2 -= 1
        out[m2 + 1] = x
    kept = 0
    for k in range(n):
        if kept > 0 and abs(out[k] - out[kept - 1]) <= 1e-12 * max(1.0, abs(out[k])):
            continue
        out[kept] = out[k]
        kept += 1
    return kept


@njit(cache=True)
def cubic_roots(a3, a2, a1, a0, out):
    """Real roots of a3 t^3 + a2 t^2 + a1 t + a0 into ``out``, sorted with duplicates merged.

    The variable is first rescaled so the monic coefficients are at most one in
    magnitude.  The real root of largest magnitude comes from the closed form
    (trigonometric for three real roots, Cardano otherwise).  Dividing it out in
    the numerically stable direction leaves a quadratic for the other two, which
    keeps small roots accurate next to a dominant one.  Every root gets a Newton
    polish on the original coefficients.
    """
    if a3 == 0.0:
        return quadratic_roots(a2, a1, a0, out)
    if a0 == 0.0:
        n = quadratic_roots(a3, a2, a1, out)
        out[n] = 0.0
        for k in range(n):
            out[k] = _polish(a3, a2, a1, a0, out[k])
        return _sort_merge(out, n + 1)
    l3 = math.log(abs(a3))
    ls = -math.inf
    if a2 != 0.0:
        ls = max(ls, math.log(abs(a2)) - l3)
    if a1 != 0.0:
        ls = max(ls, (math.log(abs(a1)) - l3) / 2.0)
    ls = max(ls, (math.log(abs(a0)) - l3) / 3.0)
    sign = 1.0 if a3 > 0.0 else -1.0
    b = sign * _scaled_ratio(a2, l3, ls, 1.0)
    c = sign * _scaled_ratio(a1, l3, ls, 2.0)
    d = sign * _scaled_ratio(a0, l3, ls, 3.0)
    n = _monic_cubic_closed_form(b, c, d, out)
    big = out[0]
    for k in range(1, n):
        if abs(out[k]) > abs(big):
            big = out[k]
    big = _polish(1.0, b, c, d, big)
    # (x - big)(qa x^2 + qb x + qc): a root above the geometric mean of all three
    # magnitudes is divided out from the constant coefficient upwards, a smaller
    # one from the leading coefficient down
    if abs(big) ** 3 >= abs(d):
        qc = -d / big
        qb = (qc - c) / big
        qa = (qb - b) / big
    else:
        qa = 1.0
        qb = b + big
        qc = c + big * qb
    disc = qb * qb - 4.0 * qa * qc
    if disc < 0.0 and -disc <= 1e-12 * (qb * qb + abs(4.0 * qa * qc)):
        qc = qb * qb / (4.0 * qa)
    m = quadratic_roots(qa, qb, qc, out)
    out[m] = big
    s = math.exp(ls)
    kept = 0
    for k in range(m + 1):
        t = out[k] * s
        if math.isfinite(t):  # roots beyond the float range are dropped
            out[kept] = _polish(a3, a2, a1, a0, t)
            kept += 1
    return _sort_merge(out, kept)


# -- quintic derivatives -------------------------------------------------------------


@njit(cache=True)
def _vel(c, t):
    return (((5.0 * c[5] * t + 4.0 * c[4]) * t + 3.0 * c[3]) * t + 2.0 * c[2]) * t + c[1]


@njit(cache=True)
def axis_peak_speed(c, T):
    """Largest |velocity| of one quintic axis on [0, T] from its acceleration roots and both ends."""
    peak = max(abs(c[1]), abs(_vel(c, T)))
    a3 = 20.0 * c[5]
    a2 = 12.0 * c[4]
    a1 = 6.0 * c[3]
    a0 = 2.0 * c[2]
    if a3 == 0.0 and a2 == 0.0 and a1 == 0.0 and a0 == 0.0:
        return peak
    roots = np.empty(3)
    n = cubic_roots(a3, a2, a1, a0, roots)
    for k in range(n):
        t = roots[k]
        if 0.0 < t < T:
            peak = max(peak, abs(_vel(c, t)))
    return peak


@njit(cache=True)
def velocity_admissible(C, T, v_max):
    for i in range(3):
        if axis_peak_speed(C[i], T) > v_max:
            return False
    return True


# -- input feasibility ------------------------------------------------------------


@njit(cache=True)
def _cubic_range(c3, c2, c1, c0, t1, t2):
    lo = ((c3 * t1 + c2) * t1 + c1) * t1 + c0
    hi = lo
    v = ((c3 * t2 + c2) * t2 + c1) * t2 + c0
    lo = min(lo, v)
    hi = max(hi, v)
    if c3 != 0.0 or c2 != 0.0:
        roots = np.empty(2)
        n = quadratic_roots(3.0 * c3, 2.0 * c2, c1, roots)
        for k in range(n):
            t = roots[k]
            if t1 < t < t2:
                v = ((c3 * t + c2) * t + c1) * t + c0
                lo = min(lo, v)
                hi = max(hi, v)
    return lo, hi


@njit(cache=True)
def _quadratic_range(c2, c1, c0, t1, t2):
    a = (c2 * t1 + c1) * t1 + c0
    b = (c2 * t2 + c1) * t2 + c0
    lo = min(a, b)
    hi = max(a, b)
    if c2 != 0.0:
        t = -c1 / (2.0 * c2)
        if t1 < t < t2:
            v = (c2 * t + c1) * t + c0
            lo = min(lo, v)
            hi = max(hi, v)
    return lo, hi


@njit(cache=True)
def _thrust_accel(C, g, t):
    total = 0.0
    for i in range(3):
        c = C[i]
        a = ((20.0 * c[5] * t + 12.0 * c[4]) * t + 6.0 * c[3]) * t + 2.0 * c[2] + g[i]
        total += a * a
    return math.sqrt(total)


@njit(cache=True)
def input_feasibility(C, T, g, a_min, a_max, w_max, dt_min):
    """Recursive interval test of thrust and body-rate limits (see ``check_input_feasibility``).

    Returns FEASIBLE, INFEASIBLE or INDETERMINATE.  ``w_max`` of infinity
    disables the body-rate test.
    """
    f0 = _thrust_accel(C, g, 0.0)
    f1 = _thrust_accel(C, g, T)
    if not (a_min <= f0 <= a_max) or not (a_min <= f1 <= a_max):
        return INFEASIBLE
    rate_on = math.isfinite(w_max)
    stack_lo = np.empty(128)
    stack_hi = np.empty(128)
    stack_lo[0] = 0.0
    stack_hi[0] = T
    top = 1
    undecided = False
    while top > 0:
        top -= 1
        t1 = stack_lo[top]
        t2 = stack_hi[top]
        hi_sq = 0.0
        lo_sq = 0.0
        for i in range(3):
            c = C[i]
            lo, hi = _cubic_range(20.0 * c[5], 12.0 * c[4], 6.0 * c[3], 2.0 * c[2] + g[i], t1, t2)
            hi_sq += max(lo * lo, hi * hi)
            if lo > 0.0 or hi < 0.0:
                lo_sq += min(lo * lo, hi * hi)
        f_hi = math.sqrt(hi_sq)
        f_lo = math.sqrt(lo_sq)
        if f_lo > a_max or f_hi < a_min:
            return INFEASIBLE
        ok = f_hi <= a_max and f_lo >= a_min
        if ok and rate_on:
            if f_lo <= 0.0:
                ok = False
            else:
                j_sq = 0.0
                for i in range(3):
                    c = C[i]
                    lo, hi = _quadratic_range(60.0 * c[5], 24.0 * c[4], 6.0 * c[3], t1, t2)
                    j_sq += max(lo * lo, hi * hi)
                ok = math.sqrt(j_sq) / f_lo <= w_max
        if ok:
            continue
        tm = 0.5 * (t1 + t2)
        fm = _thrust_accel(C, g, tm)
        if not (a_min <= fm <= a_max):
            return INFEASIBLE
        if t2 - t1 < 2.0 * dt_min or top + 2 > stack_lo.shape[0]:
            undecided = True
            continue
        # right half below left so the left half is examined first
        stack_lo[top] = tm
        stack_hi[top] = t2
        stack_lo[top + 1] = t1
        stack_hi[top + 1] = tm
        top += 2
    return INDETERMINATE if undecided else FEASIBLE


# -- first crossing of a polynomial below zero ------------------------------------------


@njit(cache=True)
def _binom(n, k):
    r = 1.0
    for i in range(1, k + 1):
        r = r * (n - k + i) / i
    return r


@njit(cache=True)
def _horner2(c, x):
    p = 0.0
    d = 0.0
    for k in range(c.shape[0] - 1, -1, -1):
        d = d * x + p
        p = p * x + c[k]
    return p, d


@njit(cache=True)
def _refine(c, lo, hi, tol):
    """Single sign change from >= 0 at ``lo`` to < 0 at ``hi``; return the last non-negative bracket end."""
    x = 0.5 * (lo + hi)
    while hi - lo > tol:
        p, d = _horner2(c, x)
        if p >= 0.0:
            lo = x
        else:
            hi = x
        step = x - p / d if d != 0.0 else lo - 1.0
        x = step if lo < step < hi else 0.5 * (lo + hi)
        if hi - lo > tol and (x - lo < 0.25 * tol or hi - x < 0.25 * tol):
            # Newton converging onto a bracket end: straddle the root instead
            x = lo + tol * 0.5 if x - lo < hi - x else hi - tol * 0.5
    return lo


@njit(cache=True)
def _first_crossing(bern, power, limit, tol):
    """Earliest tau in [0, limit) where the polynomial turns negative, or -1.

    Bernstein subdivision, left half first: all coefficients non-negative
    certifies an interval clear, exactly one sign change isolates one root.
    """
    n = bern.shape[0]
    cap = 96
    stack = np.empty((cap, n))
    lo_s = np.empty(cap)
    hi_s = np.empty(cap)
    stack[0] = bern
    lo_s[0] = 0.0
    hi_s[0] = 1.0
    top = 1
    work = np.empty(n)
    while top > 0:
        top -= 1
        a = lo_s[top]
        b = hi_s[top]
        if a >= limit:
            continue
        c = stack[top].copy()
        cmin = c[0]
        for k in range(1, n):
            cmin = min(cmin, c[k])
        if cmin >= 0.0:
            continue
        if c[0] < 0.0:
            return a
        changes = 0
        for k in range(n - 1):
            if (c[k] < 0.0) != (c[k + 1] < 0.0):
                changes += 1
        if changes == 1:
            return _refine(power, a, b, tol)
        if b - a < tol or top + 2 > cap:
            return a
        # de Casteljau at the midpoint: left into slot top+1, right into slot top
        work[:] = c
        left = stack[top + 1]
        right = stack[top]
        left[0] = work[0]
        right[n - 1] = work[n - 1]
        for level in range(1, n):
            for k in range(n - level):
                work[k] = 0.5 * (work[k] + work[k + 1])
            left[level] = work[0]
            right[n - 1 - level] = work[n - 1 - level]
        m = 0.5 * (a + b)
        lo_s[top] = m
        hi_s[top] = b
        lo_s[top + 1] = a
        hi_s[top + 1] = m
        top += 2
    return -1.0


@njit(cache=True)
def first_negative(polys, t0, t1, tol):
    """Latest time before any row of ``polys`` turns negative on [t0, t1], or NaN if none does.

    Rows are ascending power-basis coefficients in t and must be non-negative at
    ``t0`` up to tolerance.  The result is within ``tol`` of the first crossing
    and every row is still non-negative there.
    """
    m, n = polys.shape
    length = t1 - t0
    if length <= 0.0:
        return np.nan
    deg = n - 1
    tau = np.empty(n)
    bern = np.empty(n)
    limit = 1.0
    found = False
    for r in range(m):
        # Taylor shift to t0 then scale to [0, 1]
        tau[:] = polys[r]
        for i in range(deg):
            for k in range(deg - 1, i - 1, -1):
                tau[k] += t0 * tau[k + 1]
        s = 1.0
        for k in range(n):
            tau[k] *= s
            s *= length
        any_neg = False
        for k in range(n):
            acc = 0.0
            for i in range(k + 1):
                acc += _binom(k, i) / _binom(deg, i) * tau[i]
            bern[k] = acc
            if acc < 0.0:
                any_neg = True
        if not any_neg:
            continue
        # start values within tolerance of zero count as on the boundary
        if bern[0] < 0.0:
            bern[0] = 0.0
        if tau[0] < 0.0:
            tau[0] = 0.0
        hit = _first_crossing(bern, tau, limit, tol / length)
        if hit >= 0.0 and hit < limit:
            limit = hit
            found = True
    if not found:
        return np.nan
    return t0 + limit * length


# -- pyramid growth -----------------------------------------------------------------


@njit(cache=True)
def seed_pixel(depths, u, v, need, max_radius):
    """Pixel nearest to (u, v) deeper than ``need`` within a square search window, or (-1, -1)."""
    h, w = depths.shape
    j = min(max(int(round(u)), 0), w - 1)
    i = min(max(int(round(v)), 0), h - 1)
    if depths[i, j] > need:
        return i, j
    for k in range(1, max_radius + 1):
        best = np.inf
        bi = -1
        bj = -1
        for ii in range(max(i - k, 0), min(i + k, h - 1) + 1):
            for jj in range(max(j - k, 0), min(j + k, w - 1) + 1):
                if depths[ii, jj] > need:
                    d2 = (ii - v) ** 2 + (jj - u) ** 2
                    if d2 < best:
                        best = d2
                        bi = ii
                        bj = jj
        if bi >= 0:
            return bi, bj
    return -1, -1


BLOCK = 16


@njit(cache=True)
def range_min_tables(depths):
    """Block minima for fast strip minima.

    ``rows[i, b]`` is the minimum of ``depths[i, 16b:16b + 16]`` and ``cols[j, b]``
    the same down column j; ``cols`` also carries the transposed image in its
    trailing columns so column scans read contiguous memory.
    """
    h, w = depths.shape
    rows = np.full((h, (w + BLOCK - 1) // BLOCK), np.inf)
    nb = (h + BLOCK - 1) // BLOCK
    cols = np.full((w, nb + h), np.inf)
    for i in range(h):
        bi = i // BLOCK
        for j in range(w):
            d = depths[i, j]
            bj = j // BLOCK
            if d < rows[i, bj]:
                rows[i, bj] = d
            if d < cols[j, bi]:
                cols[j, bi] = d
            cols[j, nb + i] = d
    return rows, cols


@njit(cache=True)
def _line_min(line, blocks, lo, hi, stop):
    """Minimum of ``line[lo:hi]`` from the line's block minima; returns early with any value below ``stop``."""
    low = np.inf
    b0 = (lo + BLOCK - 1) // BLOCK
    b1 = hi // BLOCK
    if b0 >= b1:
        for k in range(lo, hi):
            low = min(low, line[k])
        return low
    for k in range(lo, b0 * BLOCK):
        low = min(low, line[k])
    for k in range(b1 * BLOCK, hi):
        low = min(low, line[k])
    if low < stop:
        return low
    for b in range(b0, b1):
        if blocks[b] < low:
            low = blocks[b]
            if low < stop:
                return low
    return low


@njit(cache=True)
def _strip_min(depths, rows, cols, r0, r1, c0, c1, stop=-np.inf):
    """Minimum depth over rows r0..r1-1 and columns c0..c1-1.

    Scanning stops at the first value below ``stop``, which is then returned
    instead of the exact minimum.
    """
    low = np.inf
    if r1 - r0 <= c1 - c0:
        for i in range(r0, r1):
            low = min(low, _line_min(depths[i], rows[i], c0, c1, stop))
            if low < stop:
                return low
    else:
        nb = cols.shape[1] - depths.shape[0]
        for j in range(c0, c1):
            low = min(low, _line_min(cols[j, nb:], cols[j, :nb], r0, r1, stop))
            if low < stop:
                return low
    return low


@njit(cache=True)
def grow_block(depths, rows, cols, i, j, base, need):
    """Grow an inclusive pixel block from (i, j); returns (j0, j1, i0, i1, base).

    Sides are visited right, down, left, up.  Each side advances by a step that
    doubles on success and halves on failure.  A one-pixel strip holding a
    shallower pixel lowers the base to it if that stays at or beyond ``need``,
    which re-opens every stopped side.
    """
    h, w = depths.shape
    j0 = j
    j1 = j
    i0 = i
    i1 = i
    step = np.ones(4, dtype=np.int64)
    done = np.zeros(4, dtype=np.bool_)
    while not done.all():
        for side in range(4):
            if done[side]:
                continue
            if side == 0:
                room = w - 1 - j1
            elif side == 1:
                room = h - 1 - i1
            elif side == 2:
                room = j0
            else:
                room = i0
            if room == 0:
                done[side] = True
                continue
            k = min(step[side], room)
            # a wide strip only needs to know whether it clears the base; a single line needs its exact minimum
            stop = base if k > 1 else need
            if side == 0:
                low = _strip_min(depths, rows, cols, i0, i1 + 1, j1 + 1, j1 + 1 + k, stop)
            elif side == 1:
                low = _strip_min(depths, rows, cols, i1 + 1, i1 + 1 + k, j0, j1 + 1, stop)
            elif side == 2:
                low = _strip_min(depths, rows, cols, i0, i1 + 1, j0 - k, j0, stop)
            else:
                low = _strip_min(depths, rows, cols, i0 - k, i0, j0, j1 + 1, stop)
            if low >= base:
                step[side] = k * 2
            elif k > 1:
                step[side] = max(1, k // 2)
                continue
            elif low >= need:
                base = low
                done[:] = False
            else:
                done[side] = True
                continue
            if side == 0:
                j1 += k
            elif side == 1:
                i1 += k
            elif side == 2:
                j0 -= k
            else:
                i0 -= k
    return j0, j1, i0, i1, base


# -- pyramids --------------------------------------------------------------------------

INSIDE_TOL = 1e-9
START_OUTSIDE = -1.0
INFLATED = 0
NOT_FOUND = 1
OUT_OF_FRUSTUM = 2


@njit(cache=True)
def pyramid_planes(j0, j1, i0, i1, base, r, fx, fy, cx, cy, A, b):
    """Shrunk-pyramid half-spaces ``A p >= b`` for an inclusive pixel block.

    Rows 0-3 are the inward unit normals of the left, right, top and bottom faces
    (through the half-pixel block edges), row 4 the base plane.
    """
    kl = (j0 - 0.5 - cx) / fx
    kr = (j1 + 0.5 - cx) / fx
    kt = (i0 - 0.5 - cy) / fy
    kb = (i1 + 0.5 - cy) / fy
    A[:] = 0.0
    n = math.sqrt(1.0 + kl * kl)
    A[0, 0] = 1.0 / n
    A[0, 2] = -kl / n
    n = math.sqrt(1.0 + kr * kr)
    A[1, 0] = -1.0 / n
    A[1, 2] = kr / n
    n = math.sqrt(1.0 + kt * kt)
    A[2, 1] = 1.0 / n
    A[2, 2] = -kt / n
    n = math.sqrt(1.0 + kb * kb)
    A[3, 1] = -1.0 / n
    A[3, 2] = kb / n
    A[4, 2] = -1.0
    for k in range(4):
        b[k] = r
    b[4] = -(base - r)


@njit(cache=True)
def _inside(A, b, p):
    for k in range(A.shape[0]):
        if A[k, 0] * p[0] + A[k, 1] * p[1] + A[k, 2] * p[2] < b[k] - INSIDE_TOL:
            return False
    return True


@njit(cache=True)
def _position(C, t, out):
    for i in range(3):
        c = C[i]
        out[i] = ((((c[5] * t + c[4]) * t + c[3]) * t + c[2]) * t + c[1]) * t + c[0]


@njit(cache=True)
def exit_time(C, A, b, t_start, T):
    """First time after ``t_start`` the trajectory leaves {A p >= b}; NaN if never, START_OUTSIDE if it starts out."""
    m = A.shape[0]
    polys = np.empty((m, 6))
    for k in range(m):
        for d in range(6):
            polys[k, d] = A[k, 0] * C[0, d] + A[k, 1] * C[1, d] + A[k, 2] * C[2, d]
        polys[k, 0] -= b[k]
        v = 0.0
        for d in range(5, -1, -1):
            v = v * t_start + polys[k, d]
        if v < -INSIDE_TOL:
            return START_OUTSIDE
    return first_negative(polys, t_start, T, 1e-6)


@njit(cache=True)
def ball_exit_at(C, center, radius, t_start, T):
    """First time after ``t_start`` the trajectory leaves the ball around ``center``; NaN if never, START_OUTSIDE if it starts out."""
    poly = np.zeros((1, 11))
    for i in range(3):
        c0 = C[i, 0] - center[i]
        for p in range(6):
            cp = c0 if p == 0 else C[i, p]
            for q in range(6):
                cq = c0 if q == 0 else C[i, q]
                poly[0, p + q] -= cp * cq
    poly[0, 0] += radius * radius
    v = 0.0
    for d in range(10, -1, -1):
        v = v * t_start + poly[0, d]
    if v < -INSIDE_TOL:
        return START_OUTSIDE
    return first_negative(poly, t_start, T, 1e-6)


@njit(cache=True)
def ball_exit(C, radius, t_start, T):
    """First time after ``t_start`` the trajectory leaves the origin ball; NaN if never, START_OUTSIDE if it starts out."""
    return ball_exit_at(C, np.zeros(3), radius, t_start, T)


@njit(cache=True)
def near_ball_radius(p, near_pts, r, near_limit):
    """Radius of the free ball around ``p``: clear of every listed point by ``r`` and inside the near limit.

    ``near_pts`` must hold every image point within ``near_limit + r`` of the camera.
    """
    rho = near_limit - math.sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2])
    if rho <= 0.0:
        return 0.0
    reach = (rho + r) * (rho + r)
    for k in range(near_pts.shape[0]):
        dx = near_pts[k, 0] - p[0]
        dy = near_pts[k, 1] - p[1]
        dz = near_pts[k, 2] - p[2]
        d2 = dx * dx + dy * dy + dz * dz
        if d2 < reach:
            reach = d2
    return max(0.0, math.sqrt(reach) - r)


@njit(cache=True)
def inflate(depths, rows, cols, p, fx, fy, cx, cy, max_range, r, seed_radius, A, b, rect, need_floor=0.0):
    """Grow the pyramid for camera-frame point ``p``; fills A, b and rect = (j0, j1, i0, i1).

    The base never drops below ``p``'s depth plus the radius, nor below
    ``need_floor``.  Returns (status, base depth).
    """
    h, w = depths.shape
    if not p[2] > 0.0:
        return OUT_OF_FRUSTUM, 0.0
    u = fx * p[0] / p[2] + cx
    v = fy * p[1] / p[2] + cy
    if not (-0.5 <= u < w - 0.5 and -0.5 <= v < h - 0.5):
        return OUT_OF_FRUSTUM, 0.0
    need = max(p[2] + r + INSIDE_TOL, need_floor)
    i, j = seed_pixel(depths, u, v, need, seed_radius)
    if i < 0:
        return NOT_FOUND, 0.0
    base = min(max_range, depths[i, j])
    j0, j1, i0, i1, base = grow_block(depths, rows, cols, i, j, base, need)
    rect[0] = j0
    rect[1] = j1
    rect[2] = i0
    rect[3] = i1
    pyramid_planes(j0, j1, i0, i1, base, r, fx, fy, cx, cy, A, b)
    if p[2] < -INSIDE_TOL or not _inside(A, b, p):
        return NOT_FOUND, base
    return INFLATED, base


MAX_BALLS = 8
MIN_BALL = 0.05
DEPTH_SAMPLES = 16
FLOOR_LEVELS = 3


@njit(cache=True)
def _max_depth(C, t0, T):
    """Largest camera depth of the trajectory sampled on [t0, T]."""
    c = C[2]
    z = -np.inf
    for k in range(DEPTH_SAMPLES + 1):
        t = t0 + (T - t0) * k / DEPTH_SAMPLES
        z = max(z, ((((c[5] * t + c[4]) * t + c[3]) * t + c[2]) * t + c[1]) * t + c[0])
    return z


@njit(cache=True)
def _is_cached(base, rect, cache_base, cache_rect, n):
    for k in range(n):
        if (cache_base[k] == base and cache_rect[k, 0] == rect[0] and cache_rect[k, 1] == rect[1]
                and cache_rect[k, 2] == rect[2] and cache_rect[k, 3] == rect[3]):
            return True
    return False


@njit(cache=True)
def collision_free(C, T, depths, rows, cols, fx, fy, cx, cy, max_range, r, near_pts, near_limit, seed_radius, max_pyramids,
                   cache_A, cache_b, cache_rect, cache_base, count):
    """Cover [0, T] with near-field balls and a chain of at most ``max_pyramids`` shrunk pyramids.

    At each step the cached pyramids containing the current point (the first
    ``count[0]`` slots) are tried first, then a free ball around the point, then
    a freshly inflated pyramid, appended to the cache while there is room.  The
    new pyramid's base must clear a depth floor that starts at the deepest point
    of the remaining trajectory and drops in ``FLOOR_LEVELS`` steps to the
    current point's own need.  Returns True when the whole trajectory is
    certified free.
    """
    t = 0.0
    p = np.empty(3)
    cap = cache_A.shape[0]
    scratch_A = np.empty((5, 3))
    scratch_b = np.empty(5)
    scratch_rect = np.empty(4, dtype=np.int64)
    used = 0
    balls = 0
    while True:
        _position(C, t, p)
        best = -1.0
        for k in range(count[0]):
            if not _inside(cache_A[k], cache_b[k], p):
                continue
            e = exit_time(C, cache_A[k], cache_b[k], t, T)
            if math.isnan(e):
                return True
            best = max(best, e)
        if best > t + 1e-9:
            used += 1
            if used >= max_pyramids:
                return False
            t = best
            continue
        if balls < MAX_BALLS:
            rho = near_ball_radius(p, near_pts, r, near_limit)
            if rho >= MIN_BALL:
                e = ball_exit_at(C, p, rho, t, T)
                if math.isnan(e):
                    return True
                if e > t + 1e-9:
                    balls += 1
                    t = e
                    continue
        if count[0] < cap:
            slot = count[0]
            A = cache_A[slot]
            b = cache_b[slot]
            rect = cache_rect[slot]
        else:
            slot = -1
            A = scratch_A
            b = scratch_b
            rect = scratch_rect
        # ask for a pyramid deep enough for the rest of the trajectory first, then lower the
        # depth floor step by step down to the plain inflation
        shallow = p[2] + r + INSIDE_TOL
        deep = max(_max_depth(C, t, T) + r + INSIDE_TOL, shallow)
        status = NOT_FOUND
        base = 0.0
        for level in range(FLOOR_LEVELS, -1, -1):
            if level > 0 and deep <= shallow:
                continue
            floor = shallow + (deep - shallow) * level / FLOOR_LEVELS
            status, base = inflate(depths, rows, cols, p, fx, fy, cx, cy, max_range, r, seed_radius, A, b, rect, floor)
            if status == INFLATED and not _is_cached(base, rect, cache_base, cache_rect, count[0]):
                break
            # a repeat of a cached pyramid did not carry the trajectory past t either
            status = NOT_FOUND
        if status != INFLATED:
            return False
        if slot >= 0:
            cache_base[slot] = base
            count[0] += 1
        e = exit_time(C, A, b, t, T)
        if math.isnan(e):
            return True
        if e <= t + 1e-9:
            return False
        used += 1
        if used >= max_pyramids:
            return False
        t = e


# -- the candidate walk ------------------------------------------------------------------

HIGHER_COST = 0
INPUT_INFEASIBLE = 1
VELOCITY_INADMISSIBLE = 2
NEEDS_COLLISION = 3


@njit(cache=True)
def walk(coeffs, durations, utils, start, stop, best, g, a_min, a_max, w_max, dt_min, v_max, status, stages):
    """Screen candidates ``start..stop-1`` in order until one needs a collision check.

    Candidates not strictly better than ``best`` are marked HIGHER_COST and no
    check runs for them; otherwise input feasibility runs first and velocity
    admissibility only on success.  ``stages`` records, per candidate, a bit for
    every stage actually invoked (1 feasibility, 2 velocity).
    Returns the index of the first candidate that passed both (its status set to
    NEEDS_COLLISION), or ``stop``.
    """
    for j in range(start, stop):
        if not utils[j] > best:
            status[j] = HIGHER_COST
            continue
        stages[j] |= 1
        if input_feasibility(coeffs[j], durations[j], g, a_min, a_max, w_max, dt_min) != FEASIBLE:
            status[j] = INPUT_INFEASIBLE
            continue
        stages[j] |= 2
        if not velocity_admissible(coeffs[j], durations[j], v_max):
            status[j] = VELOCITY_INADMISSIBLE
            continue
        status[j] = NEEDS_COLLISION
        return j
    return stop


# -- batch stage runners (benchmarking) ----------------------------------------------------


@njit(cache=True)
def feasibility_batch(coeffs, durations, g, a_min, a_max, w_max, dt_min, out):
    for j in range(coeffs.shape[0]):
        out[j] = input_feasibility(coeffs[j], durations[j], g, a_min, a_max, w_max, dt_min)


@njit(cache=True)
def velocity_batch(coeffs, durations, v_max, out):
    for j in range(coeffs.shape[0]):
        out[j] = velocity_admissible(coeffs[j], durations[j], v_max)
