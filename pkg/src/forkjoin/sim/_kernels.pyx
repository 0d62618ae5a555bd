# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled simulation kernels; see ``_pykernels`` for the reference logic."""
from cpython.pycapsule cimport PyCapsule_GetPointer
from libc.math cimport log, INFINITY
from libc.stdlib cimport malloc, realloc, free
from numpy.random cimport bitgen_t

import numpy as np


cdef inline double _uniform(bitgen_t* g) noexcept nogil:
    return g.next_double(g.state)


cdef inline double _expo(bitgen_t* g, double rate) noexcept nogil:
    return -log(1.0 - g.next_double(g.state)) / rate


cdef bitgen_t* _bitgen(object gen) except NULL:
    bg = gen.bit_generator if hasattr(gen, "bit_generator") else gen
    return <bitgen_t*>PyCapsule_GetPointer(bg.capsule, "BitGenerator")


cdef struct Window:
    double warmup
    double horizon
    double bounds[5]
    double iR
    double iM
    double iMh
    double qR[4]


cdef void _win_init(Window* w, double warmup, double horizon) noexcept nogil:
    cdef int j
    cdef double step = (horizon - warmup) / 4.0
    w.warmup = warmup
    w.horizon = horizon
    for j in range(4):
        w.bounds[j] = warmup + j * step
        w.qR[j] = 0.0
    w.bounds[4] = horizon
    w.iR = 0.0
    w.iM = 0.0
    w.iMh = 0.0


cdef void _win_add(Window* w, double t0, double t1, long R, long M, long Mh) noexcept nogil:
    cdef double a = t0 if t0 > w.warmup else w.warmup
    cdef double b = t1 if t1 < w.horizon else w.horizon
    cdef double d, lo, hi
    cdef int j
    if b <= a:
        return
    d = b - a
    w.iR += <double>R * d
    w.iM += <double>M * d
    w.iMh += <double>Mh * d
    for j in range(4):
        lo = a if a > w.bounds[j] else w.bounds[j]
        hi = b if b < w.bounds[j + 1] else w.bounds[j + 1]
        if hi > lo:
            w.qR[j] += <double>R * (hi - lo)


cdef struct Log:
    double* a
    double* d
    Py_ssize_t size
    Py_ssize_t cap


cdef int _log_push(Log* lg, double a, double d) noexcept nogil:
    cdef Py_ssize_t nc
    cdef double* na
    cdef double* nd
    if lg.size == lg.cap:
        nc = lg.cap * 2 if lg.cap > 0 else 1024
        na = <double*>realloc(lg.a, nc * sizeof(double))
        if na == NULL:
            return -1
        lg.a = na
        nd = <double*>realloc(lg.d, nc * sizeof(double))
        if nd == NULL:
            return -1
        lg.d = nd
        lg.cap = nc
    lg.a[lg.size] = a
    lg.d[lg.size] = d
    lg.size += 1
    return 0


cdef object _log_lists(Log* lg):
    cdef Py_ssize_t i
    a = [lg.a[i] for i in range(lg.size)]
    d = [lg.d[i] for i in range(lg.size)]
    return a, d


cdef dict _result(Window* w, double soj_sum, double soj_sq, long long soj_n,
                  long long starts, long long high, long long arrivals,
                  long long departures, Log* lg, bint record):
    la, ld = _log_lists(lg) if record else (None, None)
    return {
        "int_R": w.iR,
        "int_M": w.iM,
        "int_Mh": w.iMh,
        "quarter_R": [w.qR[0], w.qR[1], w.qR[2], w.qR[3]],
        "soj_sum": soj_sum,
        "soj_sumsq": soj_sq,
        "soj_n": soj_n,
        "starts": starts,
        "high_starts": high,
        "arrivals": arrivals,
        "departures": departures,
        "log_arrival": la,
        "log_departure": ld,
    }


cdef struct Ring:
    # query ring buffer indexed by absolute query number modulo cap
    double* arr
    int* cnt
    long long cap


cdef int _ring_grow(Ring* r, long long head, long long tail) noexcept nogil:
    cdef long long nc = r.cap * 2
    cdef double* na = <double*>malloc(nc * sizeof(double))
    cdef int* nn = <int*>malloc(nc * sizeof(int))
    cdef long long q
    if na == NULL or nn == NULL:
        free(na)
        free(nn)
        return -1
    q = head
    while q < tail:
        na[q % nc] = r.arr[q % r.cap]
        nn[q % nc] = r.cnt[q % r.cap]
        q += 1
    free(r.arr)
    free(r.cnt)
    r.arr = na
    r.cnt = nn
    r.cap = nc
    return 0


def run_des(int n, int k, double lam, double mu0, double mu1, double p,
            double horizon, double warmup, arrival_rng, server_rngs, bint record=False):
    cdef Window win
    cdef Log lg
    cdef Ring ring
    cdef bitgen_t* ga = _bitgen(arrival_rng)
    cdef bitgen_t** gs = <bitgen_t**>malloc(n * sizeof(bitgen_t*))
    cdef long long* srv_q = <long long*>malloc(n * sizeof(long long))
    cdef double* srv_t = <double*>malloc(n * sizeof(double))
    cdef int* srv_hi = <int*>malloc(n * sizeof(int))
    cdef long long head = 0, tail = 0, q
    cdef long busy = 0, busy_hi = 0
    cdef long long starts = 0, high = 0, soj_n = 0, arrivals = 0, departures = 0
    cdef double soj_sum = 0.0, soj_sq = 0.0
    cdef double t = 0.0, ta, tn, tmin, a, s
    cdef int j, jj, jmin, hi, failed = 0
    cdef bint completion

    if gs == NULL or srv_q == NULL or srv_t == NULL or srv_hi == NULL:
        free(gs); free(srv_q); free(srv_t); free(srv_hi)
        raise MemoryError()
    for j in range(n):
        gs[j] = _bitgen(server_rngs[j])
        srv_q[j] = 0
        srv_t[j] = INFINITY
        srv_hi[j] = 0
    ring.cap = 1024
    ring.arr = <double*>malloc(ring.cap * sizeof(double))
    ring.cnt = <int*>malloc(ring.cap * sizeof(int))
    lg.a = NULL
    lg.d = NULL
    lg.size = 0
    lg.cap = 0
    if ring.arr == NULL or ring.cnt == NULL:
        free(gs); free(srv_q); free(srv_t); free(srv_hi); free(ring.arr); free(ring.cnt)
        raise MemoryError()
    _win_init(&win, warmup, horizon)

    with nogil:
        ta = _expo(ga, lam) if lam > 0.0 else INFINITY
        while True:
            jmin = -1
            tmin = INFINITY
            for j in range(n):
                if srv_t[j] < tmin:
                    tmin = srv_t[j]
                    jmin = j
            if tmin <= ta:
                tn = tmin
            else:
                tn = ta
            if tn > horizon:
                _win_add(&win, t, horizon, tail - head, busy, busy_hi)
                break
            _win_add(&win, t, tn, tail - head, busy, busy_hi)
            t = tn

            if jmin >= 0 and tmin <= ta:
                j = jmin
                q = srv_q[j]
                ring.cnt[q % ring.cap] += 1
                srv_t[j] = INFINITY
                busy -= 1
                busy_hi -= srv_hi[j]
                completion = ring.cnt[q % ring.cap] == k
                if completion:
                    a = ring.arr[q % ring.cap]
                    if a >= warmup:
                        s = t - a
                        soj_sum += s
                        soj_sq += s * s
                        soj_n += 1
                        if record and _log_push(&lg, a, t) != 0:
                            failed = 1
                            break
                    head += 1
                    departures += 1
                    for jj in range(n):
                        if jj != j and srv_q[jj] == q:
                            srv_t[jj] = INFINITY
                            busy -= 1
                            busy_hi -= srv_hi[jj]
                for jj in range(n):
                    if not completion and jj != j:
                        continue
                    if srv_q[jj] != q:
                        continue
                    srv_q[jj] = q + 1
                    if q + 1 < tail:
                        hi = 1 if _uniform(gs[jj]) < p else 0
                        srv_t[jj] = t + _expo(gs[jj], mu1 if hi else mu0)
                        srv_hi[jj] = hi
                        busy += 1
                        busy_hi += hi
                        if t >= warmup:
                            starts += 1
                            high += hi
            else:
                if tail - head == ring.cap:
                    if _ring_grow(&ring, head, tail) != 0:
                        failed = 1
                        break
                q = tail
                ring.arr[q % ring.cap] = t
                ring.cnt[q % ring.cap] = 0
                tail += 1
                arrivals += 1
                for j in range(n):
                    if srv_q[j] == q:
                        hi = 1 if _uniform(gs[j]) < p else 0
                        srv_t[j] = t + _expo(gs[j], mu1 if hi else mu0)
                        srv_hi[j] = hi
                        busy += 1
                        busy_hi += hi
                        if t >= warmup:
                            starts += 1
                            high += hi
                ta = t + _expo(ga, lam)

    free(gs); free(srv_q); free(srv_t); free(srv_hi); free(ring.arr); free(ring.cnt)
    try:
        if failed:
            raise MemoryError()
        return _result(&win, soj_sum, soj_sq, soj_n, starts, high, arrivals, departures, &lg, record)
    finally:
        free(lg.a)
        free(lg.d)


def run_ctmc(int n, int k, double lam, double mu0, double mu1, double p,
             double horizon, double warmup, rng, bint record=False):
    cdef Window win
    cdef Log lg
    cdef bitgen_t* g = _bitgen(rng)
    cdef long* y = <long*>malloc(k * sizeof(long))
    cdef long* h = <long*>malloc(k * sizeof(long))
    cdef long* N = <long*>malloc(k * sizeof(long))
    cdef double* fifo
    cdef double* nf
    cdef long long fcap = 1024, fhead = 0, ftail = 0, fq
    cdef long long starts = 0, high = 0, soj_n = 0, arrivals = 0, departures = 0
    cdef double soj_sum = 0.0, soj_sq = 0.0
    cdef double t = 0.0, tn, total, x, rh, rl, a, s
    cdef long R, M, Mh, b
    cdef int i, stage, cls, redraw, failed = 0, found
    cdef bint pooled

    fifo = <double*>malloc(fcap * sizeof(double))
    if y == NULL or h == NULL or N == NULL or fifo == NULL:
        free(y); free(h); free(N); free(fifo)
        raise MemoryError()
    for i in range(k):
        y[i] = 0
        h[i] = 0
        N[i] = 0
    lg.a = NULL
    lg.d = NULL
    lg.size = 0
    lg.cap = 0
    _win_init(&win, warmup, horizon)

    with nogil:
        while True:
            N[k - 1] = n - k + 1
            i = k - 2
            while i >= 0:
                N[i] = 1 + (N[i + 1] if y[i + 1] == 0 else 0)
                i -= 1
            R = 0
            M = 0
            Mh = 0
            total = lam
            for i in range(k):
                if y[i] > 0:
                    R += y[i]
                    M += N[i]
                    Mh += h[i]
                    total += h[i] * mu1 + (N[i] - h[i]) * mu0
            if total <= 0.0:
                _win_add(&win, t, horizon, R, M, Mh)
                break
            tn = t + -log(1.0 - _uniform(g)) / total
            if tn > horizon:
                _win_add(&win, t, horizon, R, M, Mh)
                break
            _win_add(&win, t, tn, R, M, Mh)
            t = tn

            x = _uniform(g) * total
            if x < lam:
                arrivals += 1
                if ftail - fhead == fcap:
                    nf = <double*>malloc(2 * fcap * sizeof(double))
                    if nf == NULL:
                        failed = 1
                        break
                    fq = fhead
                    while fq < ftail:
                        nf[fq % (2 * fcap)] = fifo[fq % fcap]
                        fq += 1
                    free(fifo)
                    fifo = nf
                    fcap = 2 * fcap
                fifo[ftail % fcap] = t
                ftail += 1
                if y[0] == 0:
                    b = 0
                    for i in range(N[0]):
                        b += 1 if _uniform(g) < p else 0
                    h[0] = b
                    if t >= warmup:
                        starts += N[0]
                        high += b
                y[0] += 1
                continue

            x -= lam
            stage = -1
            cls = 0
            found = 0
            for i in range(k):
                if y[i] == 0:
                    continue
                stage = i
                rh = h[i] * mu1
                rl = (N[i] - h[i]) * mu0
                if x < rh:
                    cls = 1
                    found = 1
                    break
                if x < rh + rl:
                    cls = 0
                    found = 1
                    break
                x -= rh + rl
            if not found:
                cls = 1 if h[stage] == N[stage] else 0

            i = stage
            redraw = 1 if _uniform(g) < p else 0
            if t >= warmup:
                starts += 1
                high += redraw
            pooled = i < k - 1 and y[i + 1] == 0
            y[i] -= 1
            if i < k - 1:
                y[i + 1] += 1
            else:
                a = fifo[fhead % fcap]
                fhead += 1
                departures += 1
                if a >= warmup:
                    s = t - a
                    soj_sum += s
                    soj_sq += s * s
                    soj_n += 1
                    if record and _log_push(&lg, a, t) != 0:
                        failed = 1
                        break
            if y[i] == 0:
                h[i] = 0
            elif pooled:
                h[i] = redraw
            else:
                h[i] += redraw - cls
            if pooled:
                b = 0
                for stage in range(N[i + 1]):
                    b += 1 if _uniform(g) < p else 0
                h[i + 1] = b
                if t >= warmup:
                    starts += N[i + 1]
                    high += b

    free(y); free(h); free(N); free(fifo)
    try:
        if failed:
            raise MemoryError()
        return _result(&win, soj_sum, soj_sq, soj_n, starts, high, arrivals, departures, &lg, record)
    finally:
        free(lg.a)
        free(lg.d)
