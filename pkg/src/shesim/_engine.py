"""Compiled inner loops. Python-facing wrappers live in noise.py and solver.py.

Noise for cell (n, j) of a grid is the standard normal at counter
n * stride + j of the replica's stream, scaled by sqrt(dt dx). A grid run
with ``refine = k`` instead sums the 4^k x 2^k normals of the grid refined k
times that tile its cell, which couples a coarse run to the fine run driven
by the same key (same Brownian sheet, two resolutions).
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from ._rng import normal_at

SIGMA_ZERO, SIGMA_LINEAR, SIGMA_WOBBLE, SIGMA_TABLE = 0, 1, 2, 3


@njit(cache=True, inline="always")
def cell_normal(key, n, j, stride, refine):
    if refine == 0:
        return normal_at(key, n * stride + j)
    f = 1 << refine
    ft = f * f
    acc = 0.0
    for a in range(ft):
        base = (n * ft + a) * stride + j * f
        for b in range(f):
            acc += normal_at(key, base + b)
    return acc / math.sqrt(ft * f)


@njit(cache=True)
def _table_eval(tx, ty, u):
    m = tx.size
    if u <= tx[0]:
        return ty[0] + (u - tx[0]) * (ty[1] - ty[0]) / (tx[1] - tx[0])
    if u >= tx[m - 1]:
        return ty[m - 1] + (u - tx[m - 1]) * (ty[m - 1] - ty[m - 2]) / (tx[m - 1] - tx[m - 2])
    lo, hi = 0, m - 1
    while hi - lo > 1:
        mid = (lo + hi) >> 1
        if tx[mid] <= u:
            lo = mid
        else:
            hi = mid
    return ty[lo] + (u - tx[lo]) * (ty[hi] - ty[lo]) / (tx[hi] - tx[lo])


@njit(cache=True, inline="always")
def sigma_eval(kind, lam, tx, ty, u):
    if kind == SIGMA_LINEAR:
        return lam * u
    if kind == SIGMA_WOBBLE:
        return lam * (u + 0.5 * math.sin(u))
    if kind == SIGMA_TABLE:
        return _table_eval(tx, ty, u)
    return 0.0


@njit(cache=True, inline="always")
def sigma_diff(kind, lam, tx, ty, u, d):
    """sigma(u + d) - sigma(u) without cancellation for the closed-form kinds."""
    if kind == SIGMA_LINEAR:
        return lam * d
    if kind == SIGMA_WOBBLE:
        return lam * (d + math.cos(u + 0.5 * d) * math.sin(0.5 * d))
    if kind == SIGMA_TABLE:
        return _table_eval(tx, ty, u + d) - _table_eval(tx, ty, u)
    return 0.0


@njit(cache=True, nogil=True)
def noise_block(key, n0, n1, cells, stride, refine, out):
    for n in range(n0, n1):
        for j in range(cells):
            out[n - n0, j] = cell_normal(key, n, j, stride, refine)


@njit(cache=True, nogil=True)
def run_batch(keys, u0, bc_lo, bc_hi, n_steps, stride, refine, r, c,
              skind, slam, stx, sty, clamp, rec_steps, out, abort_step, neg_count):
    """Explicit scheme for a batch of replicas; rows at ``rec_steps`` go to ``out``."""
    cells = u0.size
    n_rec = rec_steps.size
    for b in range(keys.size):
        key = keys[b]
        u = u0.copy()
        nxt = np.empty_like(u)
        p = 0
        while p < n_rec and rec_steps[p] == 0:
            out[b, p, :] = u
            p += 1
        negs = 0
        abort_step[b] = -1
        for n in range(n_steps):
            nxt[0] = bc_lo[n + 1]
            nxt[cells - 1] = bc_hi[n + 1]
            ok = True
            for j in range(1, cells - 1):
                z = cell_normal(key, n, j, stride, refine)
                v = (u[j] + r * (u[j + 1] - 2.0 * u[j] + u[j - 1])
                     + sigma_eval(skind, slam, stx, sty, u[j]) * c * z)
                if v < 0.0:
                    if clamp:
                        v = 0.0
                    else:
                        negs += 1
                if not math.isfinite(v):
                    ok = False
                nxt[j] = v
            if not ok:
                abort_step[b] = n + 1
                for q in range(p, n_rec):
                    out[b, q, :] = np.nan
                p = n_rec
                break
            u, nxt = nxt, u
            while p < n_rec and rec_steps[p] == n + 1:
                out[b, p, :] = u
                p += 1
        neg_count[b] = negs


@njit(cache=True, nogil=True)
def run_pair_batch(keys, u0, d0, bc_lo, bc_hi, dbc_lo, dbc_hi, n_steps, stride, refine,
                   r, c, skind, slam, stx, sty, rec_steps, out_d, abort_step):
    """Evolve u and the coupled difference d = v - u under one noise.

    Carrying d directly keeps its relative accuracy when it is many orders
    of magnitude below u.
    """
    cells = u0.size
    n_rec = rec_steps.size
    for b in range(keys.size):
        key = keys[b]
        u = u0.copy()
        d = d0.copy()
        un = np.empty_like(u)
        dn = np.empty_like(d)
        p = 0
        while p < n_rec and rec_steps[p] == 0:
            out_d[b, p, :] = d
            p += 1
        abort_step[b] = -1
        for n in range(n_steps):
            un[0] = bc_lo[n + 1]
            un[cells - 1] = bc_hi[n + 1]
            dn[0] = dbc_lo[n + 1]
            dn[cells - 1] = dbc_hi[n + 1]
            ok = True
            for j in range(1, cells - 1):
                z = c * cell_normal(key, n, j, stride, refine)
                un[j] = (u[j] + r * (u[j + 1] - 2.0 * u[j] + u[j - 1])
                         + sigma_eval(skind, slam, stx, sty, u[j]) * z)
                dn[j] = (d[j] + r * (d[j + 1] - 2.0 * d[j] + d[j - 1])
                         + sigma_diff(skind, slam, stx, sty, u[j], d[j]) * z)
                if not (math.isfinite(un[j]) and math.isfinite(dn[j])):
                    ok = False
            if not ok:
                abort_step[b] = n + 1
                for q in range(p, n_rec):
                    out_d[b, q, :] = np.nan
                p = n_rec
                break
            u, un = un, u
            d, dn = dn, d
            while p < n_rec and rec_steps[p] == n + 1:
                out_d[b, p, :] = d
                p += 1


@njit(cache=True, nogil=True)
def _picard_sweep(u0, bc_lo, bc_hi, prev, z, r, c, skind, slam, stx, sty, cur):
    n_steps = z.shape[0]
    cells = u0.size
    cur[0, :] = u0
    for m in range(n_steps):
        cur[m + 1, 0] = bc_lo[m + 1]
        cur[m + 1, cells - 1] = bc_hi[m + 1]
        for j in range(1, cells - 1):
            cur[m + 1, j] = (cur[m, j] + r * (cur[m, j + 1] - 2.0 * cur[m, j] + cur[m, j - 1])
                             + sigma_eval(skind, slam, stx, sty, prev[m, j]) * c * z[m, j])


@njit(cache=True, nogil=True)
def picard_full(key, u0, bc_lo, bc_hi, n_steps, stride, refine, r, c,
                skind, slam, stx, sty, n_iters, out):
    """All iterates u^(0..n_iters) on the full space-time grid for one replica."""
    cells = u0.size
    z = np.empty((n_steps, cells))
    noise_block(key, 0, n_steps, cells, stride, refine, z)
    for m in range(n_steps + 1):
        out[0, m, :] = u0
    for k in range(n_iters):
        _picard_sweep(u0, bc_lo, bc_hi, out[k], z, r, c, skind, slam, stx, sty, out[k + 1])


@njit(cache=True, nogil=True)
def picard_batch(keys, u0, bc_lo, bc_hi, n_steps, stride, refine, r, c,
                 skind, slam, stx, sty, n_iters, out):
    """Final-time rows of every Picard iterate, for a batch of replicas."""
    cells = u0.size
    z = np.empty((n_steps, cells))
    prev = np.empty((n_steps + 1, cells))
    cur = np.empty((n_steps + 1, cells))
    for b in range(keys.size):
        noise_block(keys[b], 0, n_steps, cells, stride, refine, z)
        for m in range(n_steps + 1):
            prev[m, :] = u0
        out[b, 0, :] = u0
        for k in range(n_iters):
            _picard_sweep(u0, bc_lo, bc_hi, prev, z, r, c, skind, slam, stx, sty, cur)
            out[b, k + 1, :] = cur[n_steps]
            prev, cur = cur, prev


@njit(cache=True)
def lattice_kernel(r, n_steps):
    """G[s, n_steps + d]: weight at offset d after s steps of the (r, 1-2r, r) stencil."""
    width = 2 * n_steps + 1
    G = np.zeros((n_steps + 1, width))
    G[0, n_steps] = 1.0
    for s in range(n_steps):
        for d in range(width):
            acc = (1.0 - 2.0 * r) * G[s, d]
            if d > 0:
                acc += r * G[s, d - 1]
            if d < width - 1:
                acc += r * G[s, d + 1]
            G[s + 1, d] = acc
    return G


@njit(cache=True, nogil=True)
def localized_one(key, J, i0, n_levels, windows, G, stride, refine, c,
                  skind, slam, stx, sty, read_mask, levels_out):
    """Localized Picard value at (final step, cell i0) for one replica.

    J is the deterministic heat flow on the grid (steps x cells). Level j+1
    at (N, i) integrates only over cells k with |k - i| <= windows[N].
    ``read_mask`` records every noise cell touched; ``levels_out[j]`` is the
    level-j value at the target.
    """
    NF = J.shape[0] - 1
    cells = J.shape[1]
    K = G.shape[1] // 2
    wmax = windows[NF]
    lo_all = max(1, i0 - n_levels * wmax)
    hi_all = min(cells - 2, i0 + n_levels * wmax)
    span = hi_all - lo_all + 1
    U = np.empty((NF + 1, span))
    Unew = np.empty((NF + 1, span))
    F = np.zeros((NF, span))
    z = np.empty((NF, span))
    for m in range(NF):
        for k in range(span):
            z[m, k] = cell_normal(key, m, lo_all + k, stride, refine)
    for m in range(NF + 1):
        for k in range(span):
            U[m, k] = J[m, lo_all + k]
    levels_out[0] = J[NF, i0]
    for j in range(n_levels):
        # sources: level-j values on cells within (n - j) windows of i0
        src_lo = max(lo_all, i0 - (n_levels - j) * wmax)
        src_hi = min(hi_all, i0 + (n_levels - j) * wmax)
        for m in range(NF):
            for k in range(src_lo, src_hi + 1):
                kk = k - lo_all
                F[m, kk] = sigma_eval(skind, slam, stx, sty, U[m, kk]) * c * z[m, kk]
                read_mask[m, k] = True
        last = j == n_levels - 1
        tgt_lo = i0 if last else max(lo_all, i0 - (n_levels - j - 1) * wmax)
        tgt_hi = i0 if last else min(hi_all, i0 + (n_levels - j - 1) * wmax)
        n_first = NF if last else 1
        for m in range(NF + 1):
            for k in range(span):
                Unew[m, k] = U[m, k]
        for N in range(n_first, NF + 1):
            w = windows[N]
            for i in range(tgt_lo, tgt_hi + 1):
                acc = 0.0
                klo = max(src_lo, i - w)
                khi = min(src_hi, i + w)
                for m in range(N):
                    s = N - 1 - m
                    for k in range(max(klo, i - s), min(khi, i + s) + 1):
                        acc += G[s, K + k - i] * F[m, k - lo_all]
                Unew[N, i - lo_all] = J[N, i] + acc
        U, Unew = Unew, U
        levels_out[j + 1] = U[NF, i0 - lo_all]
    return U[NF, i0 - lo_all]
