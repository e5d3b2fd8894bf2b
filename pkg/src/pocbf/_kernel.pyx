# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled trajectory kernel; same contract as ``_kernel_py.simulate_chunk``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport log, sqrt, cos, isfinite, fabs
from libc.stdint cimport uint64_t, int64_t

cnp.import_array()

cdef double TWO_PI = 6.283185307179586
cdef double TWO_M53 = 1.1102230246251565e-16


cdef inline uint64_t mix(uint64_t z) noexcept nogil:
    z += 0x9E3779B97F4A7C15ULL
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline double gauss(uint64_t pref, uint64_t c) noexcept nogil:
    cdef uint64_t r1 = mix(pref ^ c)
    cdef uint64_t r2 = mix(r1)
    cdef double u1 = (<double>(r1 >> 11) + 0.5) * TWO_M53
    cdef double u2 = <double>(r2 >> 11) * TWO_M53
    return sqrt(-2.0 * log(u1)) * cos(TWO_PI * u2)


cdef inline void csr_add(const int64_t[:] ptr, const int64_t[:] idx, const double[:] val,
                         const double* v, double* out, Py_ssize_t rows) noexcept nogil:
    cdef Py_ssize_t i, k
    cdef double acc
    for i in range(rows):
        acc = 0.0
        for k in range(ptr[i], ptr[i + 1]):
            acc = acc + val[k] * v[idx[k]]
        out[i] = out[i] + acc


cdef inline bint in_union(const int64_t[:] bptr, const int64_t[:] bstart, const double[:] lo,
                          const double[:] hi, Py_ssize_t blk, Py_ssize_t off, Py_ssize_t dim,
                          const double* x) noexcept nogil:
    cdef Py_ssize_t b, j, s
    cdef bint inside
    for b in range(bptr[blk], bptr[blk + 1]):
        s = bstart[b]
        inside = True
        for j in range(dim):
            if not (x[off + j] >= lo[s + j] and x[off + j] <= hi[s + j]):
                inside = False
                break
        if inside:
            return True
    return False


def simulate_chunk(L, double[:, ::1] x0, double[:, ::1] xh0, uint64_t seed, const int64_t[:] trials,
                   int horizon, int mode, bint stop_early):
    cdef Py_ssize_t n = L.n, m = L.m, ns = L.ns, nm = L.nm, nb = L.nblocks
    cdef Py_ssize_t T = x0.shape[0]
    cdef const int64_t[:] axx_p = L.Axx[0], axx_i = L.Axx[1]
    cdef const double[:] axx_v = L.Axx[2]
    cdef const int64_t[:] bxu_p = L.Bxu[0], bxu_i = L.Bxu[1]
    cdef const double[:] bxu_v = L.Bxu[2]
    cdef const int64_t[:] gx_p = L.Gx[0], gx_i = L.Gx[1]
    cdef const double[:] gx_v = L.Gx[2]
    cdef const int64_t[:] ahh_p = L.Ahh[0], ahh_i = L.Ahh[1]
    cdef const double[:] ahh_v = L.Ahh[2]
    cdef const int64_t[:] ahx_p = L.Ahx[0], ahx_i = L.Ahx[1]
    cdef const double[:] ahx_v = L.Ahx[2]
    cdef const int64_t[:] bhu_p = L.Bhu[0], bhu_i = L.Bhu[1]
    cdef const double[:] bhu_v = L.Bhu[2]
    cdef const int64_t[:] gh_p = L.Gh[0], gh_i = L.Gh[1]
    cdef const double[:] gh_v = L.Gh[2]
    cdef const int64_t[:] fu_p = L.Fu[0], fu_i = L.Fu[1]
    cdef const double[:] fu_v = L.Fu[2]
    cdef const double[:] cx = L.cx, ch = L.ch, fu0 = L.fu, ulo = L.ulo, uhi = L.uhi
    cdef const int64_t[:] s_block = L.s_block, s_coord = L.s_coord, m_block = L.m_block, m_coord = L.m_coord
    cdef const int64_t[:] boff = L.block_off
    cdef const int64_t[:] ub_ptr = L.unsafe_ptr, ub_start = L.unsafe_start
    cdef const double[:] ub_lo = L.unsafe_lo, ub_hi = L.unsafe_hi
    cdef const int64_t[:] db_ptr = L.domain_ptr, db_start = L.domain_start
    cdef const double[:] db_lo = L.domain_lo, db_hi = L.domain_hi

    hit_a = np.full(T, -1, dtype=np.int64)
    leave_a = np.full(T, -1, dtype=np.int64)
    div_a = np.full(T, -1, dtype=np.int64)
    err_a = np.zeros(T, dtype=np.float64)
    cdef int64_t[:] hit = hit_a, leave = leave_a, div = div_a
    cdef double[:] sup_err = err_a

    buf = np.zeros(4 * n + m + ns + nm + 2 * nb + 1, dtype=np.float64)
    cdef double[:] B = buf
    cdef double* x = &B[0]
    cdef double* xh = x + n
    cdef double* xn = xh + n
    cdef double* xhn = xn + n
    cdef double* u = xhn + n
    cdef double* zs = u + m
    cdef double* zm = zs + ns
    cdef double* pref = zm + nm   # stored as bits
    cdef uint64_t* pbits = <uint64_t*> pref

    cdef Py_ssize_t t, k, i, j, blk, dim
    cdef uint64_t h0 = mix(seed), ht, hb
    cdef double e, d
    cdef bint all_in, any_in, inside, left, bad
    cdef int64_t tr

    with nogil:
        for t in range(T):
            tr = trials[t]
            for i in range(n):
                x[i] = x0[t, i]
                xh[i] = xh0[t, i]
            ht = mix(h0 ^ <uint64_t>tr)
            for k in range(horizon + 1):
                bad = False
                e = 0.0
                for i in range(n):
                    if not (isfinite(x[i]) and isfinite(xh[i])):
                        bad = True
                        break
                    d = fabs(x[i] - xh[i])
                    if d > e:
                        e = d
                if bad:
                    div[t] = k
                    break
                if e > sup_err[t]:
                    sup_err[t] = e
                all_in = nb > 0
                any_in = False
                left = False
                for blk in range(nb):
                    dim = boff[blk + 1] - boff[blk]
                    if ub_ptr[blk + 1] > ub_ptr[blk]:
                        inside = in_union(ub_ptr, ub_start, ub_lo, ub_hi, blk, boff[blk], dim, x)
                    else:
                        inside = False
                    if inside:
                        any_in = True
                    else:
                        all_in = False
                    if db_ptr[blk + 1] > db_ptr[blk]:
                        if not in_union(db_ptr, db_start, db_lo, db_hi, blk, boff[blk], dim, x):
                            left = True
                if hit[t] < 0 and ((mode == 0 and all_in) or (mode == 1 and any_in)):
                    hit[t] = k
                if leave[t] < 0 and left:
                    leave[t] = k
                if stop_early and (hit[t] >= 0 or leave[t] >= 0):
                    break
                if k == horizon:
                    break
                # control
                for j in range(m):
                    u[j] = fu0[j]
                csr_add(fu_p, fu_i, fu_v, xh, u, m)
                for j in range(m):
                    if u[j] < ulo[j]:
                        u[j] = ulo[j]
                    elif u[j] > uhi[j]:
                        u[j] = uhi[j]
                # noise, one hash prefix per block
                for blk in range(nb):
                    hb = mix(ht ^ <uint64_t>blk)
                    pbits[blk] = mix(hb ^ <uint64_t>k)
                for j in range(ns):
                    zs[j] = gauss(pbits[s_block[j]], <uint64_t>s_coord[j])
                for j in range(nm):
                    zm[j] = gauss(pbits[m_block[j]], <uint64_t>m_coord[j])
                for i in range(n):
                    xn[i] = 0.0
                    xhn[i] = 0.0
                csr_add(axx_p, axx_i, axx_v, x, xn, n)
                csr_add(bxu_p, bxu_i, bxu_v, u, xn, n)
                csr_add(gx_p, gx_i, gx_v, zs, xn, n)
                csr_add(ahh_p, ahh_i, ahh_v, xh, xhn, n)
                csr_add(ahx_p, ahx_i, ahx_v, x, xhn, n)
                csr_add(bhu_p, bhu_i, bhu_v, u, xhn, n)
                csr_add(gh_p, gh_i, gh_v, zm, xhn, n)
                for i in range(n):
                    x[i] = xn[i] + cx[i]
                    xh[i] = xhn[i] + ch[i]
    return hit_a, leave_a, div_a, err_a
