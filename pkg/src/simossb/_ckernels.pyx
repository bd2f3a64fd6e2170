# cython: language_level=3
"""Compiled kernels; same contracts as :mod:`simossb._pykernels`."""
import numpy as np

from libc.math cimport ceil, fabs, INFINITY, NAN, floor
from libc.stdlib cimport malloc, free

BACKEND = "cython"


def sample_grid(const double[:, ::1] cum, const double[:, ::1] u):
    cdef Py_ssize_t n = u.shape[0], m = cum.shape[0], size = cum.shape[1]
    cdef Py_ssize_t i, k, lo, hi, mid
    cdef double x
    out_arr = np.empty((n, m), dtype=np.int64)
    cdef long long[:, ::1] out = out_arr
    for i in range(n):
        for k in range(m):
            x = u[i, k]
            # first index with cum > x
            lo = 0
            hi = size
            while lo < hi:
                mid = (lo + hi) >> 1
                if cum[k, mid] <= x:
                    lo = mid + 1
                else:
                    hi = mid
            if lo > size - 1:
                lo = size - 1
            out[i, k] = lo
    return out_arr


cdef inline void _mv_one(const double[::1] table, const double* p, Py_ssize_t m,
                         double* costs, double* out) noexcept nogil:
    cdef Py_ssize_t nb = 1 << m, mask, j
    cdef double with_j, without, s
    costs[0] = 0.0
    for mask in range(1, nb):
        s = 0.0
        for j in range(m):
            if (mask >> j) & 1:
                s += p[j]
        costs[mask] = s
    for j in range(m):
        with_j = -INFINITY
        without = -INFINITY
        for mask in range(nb):
            if (mask >> j) & 1:
                s = table[mask] - costs[mask ^ (1 << j)]
                if s > with_j:
                    with_j = s
            else:
                s = table[mask] - costs[mask]
                if s > without:
                    without = s
        if without > with_j:
            with_j = without
        out[j] = with_j - without


def marginal_values(const double[:, ::1] tables, const double[:, ::1] prices):
    cdef Py_ssize_t n = prices.shape[0], m = prices.shape[1], i, j
    out_arr = np.empty((n, m))
    cdef double[:, ::1] out = out_arr
    cdef double* costs = <double*> malloc((1 << m) * sizeof(double))
    try:
        with nogil:
            for i in range(n):
                _mv_one(tables[i], &prices[i, 0], m, costs, &out[i, 0])
    finally:
        free(costs)
    return out_arr


def average_mu(const double[:, ::1] tables, prices_in):
    cdef const double[:, :, ::1] prices = np.ascontiguousarray(prices_in, dtype=np.float64)
    cdef Py_ssize_t n = prices.shape[0], k = prices.shape[1], m = prices.shape[2]
    cdef Py_ssize_t i, s, j
    out_arr = np.zeros((n, m))
    cdef double[:, ::1] out = out_arr
    cdef double* costs = <double*> malloc((1 << m) * sizeof(double))
    cdef double* mv = <double*> malloc(m * sizeof(double))
    try:
        with nogil:
            for i in range(n):
                for s in range(k):
                    _mv_one(tables[i], &prices[i, s, 0], m, costs, mv)
                    for j in range(m):
                        out[i, j] += mv[j]
                for j in range(m):
                    out[i, j] = out[i, j] / k
    finally:
        free(costs)
        free(mv)
    return out_arr


cdef inline void _win_stat(const double[::1] cum, const double[::1] pcum, double b,
                           double* prob, double* pay) noexcept nogil:
    cdef Py_ssize_t size = cum.shape[0]
    cdef double c
    if b > size:
        b = size
    c = ceil(b) - 1
    if c < 0:
        prob[0] = 0.0
        pay[0] = 0.0
        return
    cdef Py_ssize_t idx = <Py_ssize_t> c
    if idx > size - 1:
        idx = size - 1
    prob[0] = cum[idx]
    pay[0] = pcum[idx]


cdef inline double _eu(const double[::1] table, const double* prob, const double* pay,
                       Py_ssize_t m) noexcept nogil:
    cdef Py_ssize_t nb = 1 << m, mask, k
    cdef double total = 0.0, pr
    for mask in range(nb):
        pr = 1.0
        for k in range(m):
            if (mask >> k) & 1:
                pr = pr * prob[k]
            else:
                pr = pr * (1.0 - prob[k])
        total += pr * table[mask]
    for k in range(m):
        total -= pay[k]
    return total


def exact_eu(const double[:, ::1] tables, const double[:, ::1] bids, cum_in, pcum_in):
    cdef const double[:, :, ::1] cum = np.ascontiguousarray(cum_in, dtype=np.float64)
    cdef const double[:, :, ::1] pcum = np.ascontiguousarray(pcum_in, dtype=np.float64)
    cdef Py_ssize_t n = bids.shape[0], m = bids.shape[1], i, k, q
    cdef bint shared = cum.shape[0] == 1
    out_arr = np.empty(n)
    cdef double[::1] out = out_arr
    cdef double* prob = <double*> malloc(m * sizeof(double))
    cdef double* pay = <double*> malloc(m * sizeof(double))
    try:
        with nogil:
            for i in range(n):
                q = 0 if shared else i
                for k in range(m):
                    _win_stat(cum[q, k], pcum[q, k], bids[i, k], &prob[k], &pay[k])
                out[i] = _eu(tables[i], prob, pay, m)
    finally:
        free(prob)
        free(pay)
    return out_arr


def local_bid_product(const double[:, ::1] tables, cum_in, pcum_in, bids,
                      int iterations, double tol, double[:, ::1] trace=None):
    cdef const double[:, :, ::1] cum = np.ascontiguousarray(cum_in, dtype=np.float64)
    cdef const double[:, :, ::1] pcum = np.ascontiguousarray(pcum_in, dtype=np.float64)
    b_arr = np.array(bids, dtype=np.float64, order="C", copy=True)
    cdef double[:, ::1] b = b_arr
    cdef Py_ssize_t n = b.shape[0], m = b.shape[1], nb = 1 << m
    cdef Py_ssize_t i, j, k, q, mask, sweep, col
    cdef bint shared = cum.shape[0] == 1
    cdef bint tracing = trace is not None
    cdef double change, new, pr, delta
    cdef double* prob = <double*> malloc(m * sizeof(double))
    cdef double* pay = <double*> malloc(m * sizeof(double))
    if tracing:
        trace[:, :] = NAN
    try:
        with nogil:
            for i in range(n):
                q = 0 if shared else i
                for k in range(m):
                    _win_stat(cum[q, k], pcum[q, k], b[i, k], &prob[k], &pay[k])
                if tracing:
                    trace[i, 0] = _eu(tables[i], prob, pay, m)
                for sweep in range(iterations):
                    change = 0.0
                    for j in range(m):
                        new = 0.0
                        for mask in range(nb):
                            if (mask >> j) & 1:
                                continue
                            pr = 1.0
                            for k in range(m):
                                if k == j:
                                    continue
                                if (mask >> k) & 1:
                                    pr = pr * prob[k]
                                else:
                                    pr = pr * (1.0 - prob[k])
                            delta = tables[i, mask | (1 << j)] - tables[i, mask]
                            new += pr * delta
                        if fabs(new - b[i, j]) > change:
                            change = fabs(new - b[i, j])
                        b[i, j] = new
                        _win_stat(cum[q, j], pcum[q, j], new, &prob[j], &pay[j])
                        if tracing:
                            col = 1 + sweep * m + j
                            trace[i, col] = _eu(tables[i], prob, pay, m)
                    if not change > tol:
                        break
    finally:
        free(prob)
        free(pay)
    return b_arr


def local_bid_joint(const double[:, ::1] tables, samples_in, bids,
                    int iterations, double tol, double[:, ::1] trace=None):
    cdef const long long[:, :, ::1] samples = np.ascontiguousarray(samples_in, dtype=np.int64)
    b_arr = np.array(bids, dtype=np.float64, order="C", copy=True)
    cdef double[:, ::1] b = b_arr
    cdef Py_ssize_t n = samples.shape[0], S = samples.shape[1], m = samples.shape[2]
    cdef Py_ssize_t i, j, k, s, sweep, rest
    cdef bint tracing = trace is not None
    cdef double change, new, tot, paid
    cdef long long* won = <long long*> malloc(S * sizeof(long long))
    if tracing:
        trace[:, :] = NAN
    try:
        with nogil:
            for i in range(n):
                for s in range(S):
                    won[s] = 0
                    for k in range(m):
                        if b[i, k] > samples[i, s, k]:
                            won[s] |= 1 << k
                if tracing:
                    trace[i, 0] = _joint_utility(tables[i], samples[i], won, S, m)
                for sweep in range(iterations):
                    change = 0.0
                    for j in range(m):
                        tot = 0.0
                        for s in range(S):
                            rest = won[s] & ~(1 << j)
                            tot += tables[i, rest | (1 << j)] - tables[i, rest]
                        new = tot / S
                        if fabs(new - b[i, j]) > change:
                            change = fabs(new - b[i, j])
                        b[i, j] = new
                        for s in range(S):
                            if new > samples[i, s, j]:
                                won[s] |= 1 << j
                            else:
                                won[s] &= ~(1 << j)
                        if tracing:
                            trace[i, 1 + sweep * m + j] = _joint_utility(tables[i], samples[i], won, S, m)
                    if not change > tol:
                        break
    finally:
        free(won)
    return b_arr


cdef inline double _joint_utility(const double[::1] table, const long long[:, ::1] samples,
                                  long long* won, Py_ssize_t S, Py_ssize_t m) noexcept nogil:
    cdef double tot = 0.0, paid
    cdef Py_ssize_t s, k
    for s in range(S):
        paid = 0.0
        for k in range(m):
            if (won[s] >> k) & 1:
                paid += samples[s, k]
        tot += table[won[s]] - paid
    return tot / S


def sample_utilities(const double[:, ::1] tables, bids_in, samples_in):
    cdef const double[:, :, ::1] bids = np.ascontiguousarray(bids_in, dtype=np.float64)
    cdef const long long[:, :, ::1] samples = np.ascontiguousarray(samples_in, dtype=np.int64)
    cdef Py_ssize_t n = bids.shape[0], C = bids.shape[1], m = bids.shape[2]
    cdef Py_ssize_t S = samples.shape[1], i, c, s, k, mask
    cdef double tot, paid
    out_arr = np.empty((n, C))
    cdef double[:, ::1] out = out_arr
    with nogil:
        for i in range(n):
            for c in range(C):
                tot = 0.0
                for s in range(S):
                    mask = 0
                    paid = 0.0
                    for k in range(m):
                        if bids[i, c, k] > samples[i, s, k]:
                            mask |= 1 << k
                            paid += samples[i, s, k]
                    tot += tables[i, mask] - paid
                out[i, c] = tot / S
    return out_arr


# grid bids whose utility is within this of the best count as tied
cdef double TIE_TOL = 1e-12


def optimal_grid(const double[:, ::1] tables, cum_in, pcum_in, grid_in):
    cdef const double[:, :, ::1] cum = np.ascontiguousarray(cum_in, dtype=np.float64)
    cdef const double[:, :, ::1] pcum = np.ascontiguousarray(pcum_in, dtype=np.float64)
    cdef const double[::1] grid = np.ascontiguousarray(grid_in, dtype=np.float64)
    cdef Py_ssize_t n = tables.shape[0], m = cum.shape[1], L = grid.shape[0]
    cdef Py_ssize_t i, k, l, q, mask, nb = 1 << m, cell, cells = 1, pick, rest
    cdef bint shared = cum.shape[0] == 1
    cdef double eu, pr, best
    for k in range(m):
        cells *= L
    best_b_arr = np.empty((n, m))
    best_u_arr = np.empty(n)
    cdef double[:, ::1] best_b = best_b_arr
    cdef double[::1] best_u = best_u_arr
    cdef double* gprob = <double*> malloc(m * L * sizeof(double))
    cdef double* gpay = <double*> malloc(m * L * sizeof(double))
    cdef double* values = <double*> malloc(cells * sizeof(double))
    cdef Py_ssize_t* digit = <Py_ssize_t*> malloc(m * sizeof(Py_ssize_t))
    try:
        with nogil:
            for i in range(n):
                q = 0 if shared else i
                for k in range(m):
                    for l in range(L):
                        _win_stat(cum[q, k], pcum[q, k], grid[l], &gprob[k * L + l], &gpay[k * L + l])
                    digit[k] = 0
                best = -INFINITY
                # odometer over the grid, last good fastest (lexicographic order)
                for cell in range(cells):
                    eu = 0.0
                    for mask in range(nb):
                        pr = 1.0
                        for k in range(m):
                            if (mask >> k) & 1:
                                pr = pr * gprob[k * L + digit[k]]
                            else:
                                pr = pr * (1.0 - gprob[k * L + digit[k]])
                        eu += pr * tables[i, mask]
                    for k in range(m):
                        eu -= gpay[k * L + digit[k]]
                    values[cell] = eu
                    if eu > best:
                        best = eu
                    k = m - 1
                    while k >= 0:
                        digit[k] += 1
                        if digit[k] < L:
                            break
                        digit[k] = 0
                        k -= 1
                pick = 0
                while values[pick] < best - TIE_TOL:
                    pick += 1
                best_u[i] = best
                rest = pick
                for k in range(m - 1, -1, -1):
                    best_b[i, k] = grid[rest % L]
                    rest = rest // L
    finally:
        free(gprob)
        free(gpay)
        free(values)
        free(digit)
    return best_b_arr, best_u_arr


def clear(bids_in, const double[:, ::1] u_tie):
    cdef const double[:, :, ::1] bids = np.ascontiguousarray(bids_in, dtype=np.float64)
    cdef Py_ssize_t n = bids.shape[0], A = bids.shape[1], m = bids.shape[2]
    cdef Py_ssize_t i, a, k, count, pick, seen, winner
    cdef double top, price, x
    winners_arr = np.empty((n, m), dtype=np.int64)
    prices_arr = np.empty((n, m))
    cdef long long[:, ::1] winners = winners_arr
    cdef double[:, ::1] prices = prices_arr
    with nogil:
        for i in range(n):
            for k in range(m):
                top = -INFINITY
                count = 0
                for a in range(A):
                    x = bids[i, a, k]
                    if x > top:
                        top = x
                        count = 1
                    elif x == top:
                        count += 1
                pick = <Py_ssize_t> floor(u_tie[i, k] * count)
                if pick > count - 1:
                    pick = count - 1
                seen = 0
                winner = 0
                for a in range(A):
                    if bids[i, a, k] == top:
                        if seen == pick:
                            winner = a
                            break
                        seen += 1
                price = -INFINITY
                for a in range(A):
                    if a != winner and bids[i, a, k] > price:
                        price = bids[i, a, k]
                winners[i, k] = winner
                prices[i, k] = price
    return winners_arr, prices_arr
