"""Hot numeric kernels, each in a numba flavour and a vectorised numpy flavour.

The public names (``project_box_ball``, ``langevin_chains``,
``slab_block_moments``, ``grid_shifted_moments``) dispatch on
:data:`selfselect._accel.NUMBA_ENABLED`.  Both flavours consume identical
inputs (including pre-drawn noise), so they agree to floating-point
round-off; ``benchmarks/bench_kernels.py`` times them side by side.

Regions handled here are always ``box ∩ ball``: a coordinate box
``lo <= z <= hi`` (entries may be infinite) intersected with the centred
Euclidean ball of radius ``R``.
"""
import math

import numpy as np

from ._accel import NUMBA_ENABLED, njit

DYKSTRA_TOL = 1e-10
DYKSTRA_MAX_SWEEPS = 10_000


# --------------------------------------------------------------------------
# box ∩ ball projection
# --------------------------------------------------------------------------


@njit(cache=True)
def _dykstra_nb(p, lo, hi, R, tol, max_sweeps, out, work):
    """Dykstra's alternating projections; ``work`` is a (4, dim) scratch buffer."""
    dim = p.shape[0]
    x = work[0]
    P = work[1]
    Q = work[2]
    t = work[3]
    for i in range(dim):
        x[i] = p[i]
        P[i] = 0.0
        Q[i] = 0.0
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        for i in range(dim):
            v = x[i] + P[i]
            out[i] = min(max(v, lo[i]), hi[i])
            P[i] = v - out[i]
        tn2 = 0.0
        for i in range(dim):
            t[i] = out[i] + Q[i]
            tn2 += t[i] * t[i]
        s = 1.0
        if tn2 > R * R:
            s = R / math.sqrt(tn2)
        delta = 0.0
        gap = 0.0
        for i in range(dim):
            xn = t[i] * s
            Q[i] = t[i] - xn
            delta += (xn - x[i]) ** 2
            gap += (xn - out[i]) ** 2
            x[i] = xn
        if delta <= tol * tol and gap <= tol * tol:
            break
    # ``out`` holds the box-feasible iterate, within ``tol`` of the ball
    return sweeps


@njit(cache=True)
def _project_many_nb(points, lo, hi, R, tol, max_sweeps):
    n, dim = points.shape
    out = np.empty((n, dim))
    p = np.empty(dim)
    buf = np.empty(dim)
    work = np.empty((4, dim))
    max_used = 0
    for c in range(n):
        # fast paths inline: numba call overhead dominates otherwise
        Rc = R[c]
        n2 = 0.0
        pn2 = 0.0
        for i in range(dim):
            v = points[c, i]
            cl = min(max(v, lo[c, i]), hi[c, i])
            out[c, i] = cl
            n2 += cl * cl
            pn2 += v * v
        if n2 <= Rc * Rc:
            continue
        s = Rc / math.sqrt(pn2)
        inbox = True
        for i in range(dim):
            b = points[c, i] * s
            out[c, i] = b
            if b < lo[c, i] or b > hi[c, i]:
                inbox = False
        if inbox:
            continue
        for i in range(dim):
            p[i] = points[c, i]
        used = _dykstra_nb(p, lo[c], hi[c], Rc, tol, max_sweeps, buf, work)
        if used > max_used:
            max_used = used
        for i in range(dim):
            out[c, i] = buf[i]
    return out, max_used


def _project_many_np(points, lo, hi, R, tol, max_sweeps):
    # lo/hi may be (dim,) or per-row (n, dim); R may be scalar or per-row (n,)
    points = np.asarray(points, dtype=float)
    lo = np.broadcast_to(lo, points.shape)
    hi = np.broadcast_to(hi, points.shape)
    R = np.broadcast_to(np.asarray(R, dtype=float), points.shape[:1])
    out = np.clip(points, lo, hi)
    todo = np.flatnonzero(np.einsum("ij,ij->i", out, out) > R * R)
    if todo.size == 0:
        return out, 0

    p = points[todo]
    b = p * (R[todo] / np.sqrt(np.einsum("ij,ij->i", p, p)))[:, None]
    inbox = np.all((b >= lo[todo]) & (b <= hi[todo]), axis=1)
    out[todo[inbox]] = b[inbox]
    todo = todo[~inbox]
    if todo.size == 0:
        return out, 0

    lo = lo[todo]
    hi = hi[todo]
    R = R[todo]
    x = points[todo].copy()
    yb = np.empty_like(x)
    P = np.zeros_like(x)
    Q = np.zeros_like(x)
    active = np.arange(todo.size)
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        xa = x[active]
        v = xa + P[active]
        ya = np.clip(v, lo[active], hi[active])
        P[active] = v - ya
        t = ya + Q[active]
        tn = np.sqrt(np.einsum("ij,ij->i", t, t))
        Ra = R[active]
        s = np.where(tn > Ra, Ra / np.where(tn > 0, tn, 1.0), 1.0)
        xn = t * s[:, None]
        Q[active] = t - xn
        delta = np.einsum("ij,ij->i", xn - xa, xn - xa)
        gap = np.einsum("ij,ij->i", xn - ya, xn - ya)
        x[active] = xn
        yb[active] = ya
        done = (delta <= tol * tol) & (gap <= tol * tol)
        active = active[~done]
        if active.size == 0:
            break
    out[todo] = yb
    return out, sweeps


def project_box_ball(points, lo, hi, R, tol=DYKSTRA_TOL, max_sweeps=DYKSTRA_MAX_SWEEPS):
    """Project each row of ``points`` onto ``{lo <= z <= hi} ∩ B(R)``.

    ``lo``/``hi`` may be shared (dim,) or per row; ``R`` a scalar or per row.
    Returns ``(projected, max_sweeps_used)``.  The caller is responsible for
    checking that the intersection is nonempty.
    """
    points = np.ascontiguousarray(np.atleast_2d(points), dtype=float)
    lo = np.ascontiguousarray(np.broadcast_to(lo, points.shape), dtype=float)
    hi = np.ascontiguousarray(np.broadcast_to(hi, points.shape), dtype=float)
    R = np.ascontiguousarray(np.broadcast_to(np.asarray(R, dtype=float), points.shape[:1]))
    if NUMBA_ENABLED:
        return _project_many_nb(points, lo, hi, R, tol, max_sweeps)
    return _project_many_np(points, lo, hi, R, tol, max_sweeps)


# --------------------------------------------------------------------------
# projected Langevin chains
# --------------------------------------------------------------------------


@njit(cache=True)
def _langevin_nb(z, mu, drift, sqrt_gamma, noise, lo, hi, R, tol, max_sweeps):
    n_steps, n_chains, dim = noise.shape
    p = np.empty(dim)
    buf = np.empty(dim)
    work = np.empty((4, dim))
    # step-major to walk noise in memory order; chains are independent
    for t in range(n_steps):
        for c in range(n_chains):
            Rc = R[c]
            n2 = 0.0
            pn2 = 0.0
            for i in range(dim):
                v = z[c, i] - drift * (z[c, i] - mu[c, i]) + sqrt_gamma * noise[t, c, i]
                p[i] = v
                cl = min(max(v, lo[c, i]), hi[c, i])
                buf[i] = cl
                n2 += cl * cl
                pn2 += v * v
            if n2 > Rc * Rc:
                s = Rc / math.sqrt(pn2)
                inbox = True
                for i in range(dim):
                    buf[i] = p[i] * s
                    if buf[i] < lo[c, i] or buf[i] > hi[c, i]:
                        inbox = False
                if not inbox:
                    _dykstra_nb(p, lo[c], hi[c], Rc, tol, max_sweeps, buf, work)
            for i in range(dim):
                z[c, i] = buf[i]


def _langevin_np(z, mu, drift, sqrt_gamma, noise, lo, hi, R, tol, max_sweeps):
    for t in range(noise.shape[0]):
        p = z - drift * (z - mu) + sqrt_gamma * noise[t]
        z[:], _ = _project_many_np(p, lo, hi, R, tol, max_sweeps)


def langevin_chains(z, mu, gamma, sigma, noise, lo, hi, R,
                    tol=DYKSTRA_TOL, max_sweeps=DYKSTRA_MAX_SWEEPS):
    """Advance chains ``z`` (n_chains x dim) in place by ``noise.shape[0]`` steps.

    One step is ``z <- Proj(z - gamma/(2 sigma^2) (z - mu) + sqrt(gamma) xi)``
    with ``xi`` read from ``noise[t]`` (shape n_chains x dim).  ``mu``,
    ``lo``, ``hi`` may be shared (dim,) or per chain (n_chains, dim); ``R``
    may be a scalar or per chain.
    """
    if z.dtype != np.float64 or not z.flags.c_contiguous:
        raise TypeError("chain state must be a C-contiguous float64 array")
    drift = gamma / (2.0 * sigma * sigma)
    mu = np.ascontiguousarray(np.broadcast_to(mu, z.shape), dtype=float)
    lo = np.ascontiguousarray(np.broadcast_to(lo, z.shape), dtype=float)
    hi = np.ascontiguousarray(np.broadcast_to(hi, z.shape), dtype=float)
    R = np.ascontiguousarray(np.broadcast_to(np.asarray(R, dtype=float), z.shape[:1]))
    if NUMBA_ENABLED:
        _langevin_nb(z, mu, drift, math.sqrt(gamma), noise, lo, hi, R, tol, max_sweeps)
    else:
        _langevin_np(z, mu, drift, math.sqrt(gamma), noise, lo, hi, R, tol, max_sweeps)
    return z


# --------------------------------------------------------------------------
# slab-conditioned block moments (grid estimator scoring)
# --------------------------------------------------------------------------


@njit(cache=True)
def _slab_nb(XU, y, coords, shifts, rho2, power, q):
    n, k = XU.shape
    G = coords.shape[0]
    sq = np.empty(n)
    for i in range(n):
        s = 0.0
        for a in range(k):
            s += XU[i, a] * XU[i, a]
        sq[i] = s
    sums = np.zeros((G, q))
    counts = np.zeros((G, q), dtype=np.int64)
    for g in range(G):
        shift = shifts[g]
        for i in range(n):
            t = 0.0
            for a in range(k):
                t += XU[i, a] * coords[g, a]
            if sq[i] - t * t <= rho2:
                b = (i * q) // n
                r = y[i] - shift * t
                sums[g, b] += r ** power
                counts[g, b] += 1
    return sums, counts


def _slab_np(XU, y, coords, shifts, rho2, power, q):
    n = XU.shape[0]
    G = coords.shape[0]
    sq = np.einsum("ij,ij->i", XU, XU)
    blocks = (np.arange(n, dtype=np.int64) * q) // n
    sums = np.zeros((G, q))
    counts = np.zeros((G, q), dtype=np.int64)
    for g in range(G):
        t = XU @ coords[g]
        sel = sq - t * t <= rho2
        r = y[sel] - shifts[g] * t[sel]
        sums[g] = np.bincount(blocks[sel], weights=r ** power, minlength=q)
        counts[g] = np.bincount(blocks[sel], minlength=q)
    return sums, counts


def slab_block_moments(XU, y, coords, shifts, rho, power, q):
    """Per-block sums of ``(y - shift * v.x)^power`` over the slab events.

    ``XU`` holds covariates in subspace coordinates (n x k); each row of
    ``coords`` is a unit direction ``v`` in the same coordinates.  A record
    is in the slab of ``v`` when the part of ``XU`` orthogonal to ``v`` has
    norm at most ``rho``.  Records are assigned to ``q`` contiguous blocks.
    Returns ``(sums, counts)``, both shaped ``(len(coords), q)``.
    """
    XU = np.ascontiguousarray(XU, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    coords = np.ascontiguousarray(np.atleast_2d(coords), dtype=float)
    shifts = np.ascontiguousarray(np.broadcast_to(shifts, (coords.shape[0],)), dtype=float)
    fn = _slab_nb if NUMBA_ENABLED else _slab_np
    return fn(XU, y, coords, shifts, float(rho) ** 2, int(power), int(q))


# --------------------------------------------------------------------------
# shifted power sums over a grid of weight vectors (k=2 estimator)
# --------------------------------------------------------------------------


@njit(cache=True, fastmath=True)
def _grid_nb(XU, y, C):
    n, k = XU.shape
    G = C.shape[0]
    out = np.zeros((G, 4))
    for g in range(G):
        s2 = 0.0
        s4 = 0.0
        s6 = 0.0
        s8 = 0.0
        for i in range(n):
            r = y[i]
            for a in range(k):
                r -= XU[i, a] * C[g, a]
            r2 = r * r
            r4 = r2 * r2
            s2 += r2
            s4 += r4
            s6 += r4 * r2
            s8 += r4 * r4
        out[g, 0] = s2
        out[g, 1] = s4
        out[g, 2] = s6
        out[g, 3] = s8
    return out


@njit(cache=True, fastmath=True)
def _grid2_nb(x0, x1, y, C):
    # two-column specialisation: no inner loop over coordinates, so it vectorises
    G = C.shape[0]
    n = y.shape[0]
    out = np.zeros((G, 4))
    for g in range(G):
        c0 = C[g, 0]
        c1 = C[g, 1]
        s2 = 0.0
        s4 = 0.0
        s6 = 0.0
        s8 = 0.0
        for i in range(n):
            r = y[i] - x0[i] * c0 - x1[i] * c1
            r2 = r * r
            r4 = r2 * r2
            s2 += r2
            s4 += r4
            s6 += r4 * r2
            s8 += r4 * r4
        out[g, 0] = s2
        out[g, 1] = s4
        out[g, 2] = s6
        out[g, 3] = s8
    return out


def _grid_np(XU, y, C, chunk_elems=4_000_000):
    n = XU.shape[0]
    G = C.shape[0]
    out = np.zeros((G, 4))
    step = max(1, chunk_elems // max(n, 1))
    for start in range(0, G, step):
        stop = min(G, start + step)
        r = y[:, None] - XU @ C[start:stop].T
        r2 = r * r
        r4 = r2 * r2
        out[start:stop, 0] = r2.sum(axis=0)
        out[start:stop, 1] = r4.sum(axis=0)
        out[start:stop, 2] = (r4 * r2).sum(axis=0)
        out[start:stop, 3] = (r4 * r4).sum(axis=0)
    return out


def grid_shifted_moments(XU, y, C):
    """Sums of ``r^2, r^4, r^6, r^8`` for ``r = y - XU @ c`` at each grid row ``c``."""
    XU = np.ascontiguousarray(XU, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    C = np.ascontiguousarray(np.atleast_2d(C), dtype=float)
    if NUMBA_ENABLED:
        if XU.shape[1] == 2:
            return _grid2_nb(np.ascontiguousarray(XU[:, 0]), np.ascontiguousarray(XU[:, 1]), y, C)
        return _grid_nb(XU, y, C)
    return _grid_np(XU, y, C)
