"""Reference trajectory kernel in numpy, vectorized across trials."""
from __future__ import annotations

import numpy as np

from . import rng


def _box_test(X: np.ndarray, ptr, start, lo, hi, off) -> np.ndarray:
    """``(trials, blocks)`` membership of each block state in its box union."""
    T = X.shape[0]
    nb = len(ptr) - 1
    out = np.zeros((T, nb), dtype=bool)
    for blk in range(nb):
        a, b = ptr[blk], ptr[blk + 1]
        if a == b:
            continue
        dim = off[blk + 1] - off[blk]
        xb = X[:, off[blk] : off[blk + 1]]
        for q in range(a, b):
            s = start[q]
            out[:, blk] |= np.all((xb >= lo[s : s + dim]) & (xb <= hi[s : s + dim]), axis=1)
    return out


def simulate_chunk(L, x0, xh0, seed: int, trials, horizon: int, mode: int, stop_early: bool, record: bool = False):
    """Run ``len(trials)`` trajectories of the lowered network ``L``.

    ``L`` supplies ``control(XH)`` and ``advance(X, XH, U, zs, zm)`` acting on
    ``(trials, dim)`` arrays, plus the block and region layout.

    Returns first unsafe step, first domain-exit step, divergence step (all
    ``-1`` when absent) and the sup-norm estimation error per trial. With
    ``record`` also returns state, estimate and input histories.
    """
    trials = np.asarray(trials, dtype=np.int64)
    T = len(trials)
    X = np.array(x0, dtype=float)
    XH = np.array(xh0, dtype=float)
    hit = np.full(T, -1, dtype=np.int64)
    leave = np.full(T, -1, dtype=np.int64)
    div = np.full(T, -1, dtype=np.int64)
    err = np.zeros(T)
    active = np.ones(T, dtype=bool)
    has_unsafe = np.diff(L.unsafe_ptr) > 0
    has_domain = np.diff(L.domain_ptr) > 0
    hist = ([], [], []) if record else None
    for k in range(horizon + 1):
        fin = np.all(np.isfinite(X), axis=1) & np.all(np.isfinite(XH), axis=1)
        newly = active & ~fin
        div[newly] = k
        active &= fin
        e = np.max(np.abs(X - XH), axis=1, initial=0.0)
        err = np.where(active & (e > err), e, err)
        ins = _box_test(X, L.unsafe_ptr, L.unsafe_start, L.unsafe_lo, L.unsafe_hi, L.block_off)
        dom = _box_test(X, L.domain_ptr, L.domain_start, L.domain_lo, L.domain_hi, L.block_off)
        if mode == 0:
            h = np.all(ins, axis=1) if L.nblocks > 0 else np.zeros(T, bool)
        else:
            h = np.any(ins & has_unsafe, axis=1)
        lft = np.any(~dom & has_domain, axis=1)
        hit[active & h & (hit < 0)] = k
        leave[active & lft & (leave < 0)] = k
        if stop_early:
            active &= (hit < 0) & (leave < 0)
        with np.errstate(over="ignore", invalid="ignore"):
            U = L.control(XH)
        if record:
            hist[0].append(X.copy())
            hist[1].append(XH.copy())
            hist[2].append(U.copy())
        if k == horizon or not np.any(active):
            if record and k < horizon:
                for _ in range(horizon - k):
                    for a, b in zip(hist, (X, XH, U)):
                        a.append(np.full_like(b, np.nan))
            break
        with np.errstate(over="ignore", invalid="ignore"):
            zs = rng.normals(seed, trials, k, L.s_block, L.s_coord)
            zm = rng.normals(seed, trials, k, L.m_block, L.m_coord)
            Xn, XHn = L.advance(X, XH, U, zs, zm)
        # finished trials keep their last state
        X = np.where(active[:, None], Xn, X)
        XH = np.where(active[:, None], XHn, XH)
    if record:
        return hit, leave, div, err, tuple(np.stack(a, axis=1) for a in hist)
    return hit, leave, div, err
