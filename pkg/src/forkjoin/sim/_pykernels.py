"""Pure-Python simulation kernels.

These mirror ``_kernels.pyx`` statement for statement: same random draws in
the same order from the same streams, same floating-point operations.  With
identical seeds both backends return bit-identical results.
"""
from math import inf, log


class _Window:
    """Time integrals of R, M, Mh over ``[warmup, horizon]`` plus quarter splits of R."""

    __slots__ = ("warmup", "horizon", "bounds", "iR", "iM", "iMh", "qR")

    def __init__(self, warmup, horizon):
        self.warmup = warmup
        self.horizon = horizon
        w = (horizon - warmup) / 4.0
        self.bounds = [warmup + j * w for j in range(4)] + [horizon]
        self.iR = 0.0
        self.iM = 0.0
        self.iMh = 0.0
        self.qR = [0.0, 0.0, 0.0, 0.0]

    def add(self, t0, t1, R, M, Mh):
        a = t0 if t0 > self.warmup else self.warmup
        b = t1 if t1 < self.horizon else self.horizon
        if b <= a:
            return
        d = b - a
        self.iR += R * d
        self.iM += M * d
        self.iMh += Mh * d
        bd = self.bounds
        for j in range(4):
            lo = a if a > bd[j] else bd[j]
            hi = b if b < bd[j + 1] else bd[j + 1]
            if hi > lo:
                self.qR[j] += R * (hi - lo)


def _expo(rng, rate):
    return -log(1.0 - rng.random()) / rate


def _result(win, soj_sum, soj_sq, soj_n, starts, high, arrivals, departures, log_a, log_d):
    return {
        "int_R": win.iR,
        "int_M": win.iM,
        "int_Mh": win.iMh,
        "quarter_R": list(win.qR),
        "soj_sum": soj_sum,
        "soj_sumsq": soj_sq,
        "soj_n": soj_n,
        "starts": starts,
        "high_starts": high,
        "arrivals": arrivals,
        "departures": departures,
        "log_arrival": log_a,
        "log_departure": log_d,
    }


def run_des(n, k, lam, mu0, mu1, p, horizon, warmup, arrival_rng, server_rngs, record=False):
    """Server-level event simulation of the (n, k) fork-join system.

    Every arriving query is queued at all ``n`` FCFS servers.  A server draws
    its rate class at the start of each service.  At the ``k``-th completion
    the query departs and its remaining copies are dropped at once; servers
    that were serving it start their next query with a fresh draw.

    Because service is FCFS everywhere, server ``j`` always works on the oldest
    query it has not yet finished, so its state is a single query index.
    """
    win = _Window(warmup, horizon)
    arr = []      # arrival time per query index
    cnt = []      # completions per query index
    head = 0      # oldest query still in the system
    tail = 0      # next query index
    srv_q = [0] * n
    srv_t = [inf] * n
    srv_hi = [0] * n
    busy = 0
    busy_hi = 0
    starts = 0
    high = 0
    soj_sum = 0.0
    soj_sq = 0.0
    soj_n = 0
    arrivals = 0
    departures = 0
    log_a = [] if record else None
    log_d = [] if record else None

    t = 0.0
    ta = _expo(arrival_rng, lam) if lam > 0.0 else inf

    while True:
        jmin = -1
        tmin = inf
        for j in range(n):
            if srv_t[j] < tmin:
                tmin = srv_t[j]
                jmin = j
        if tmin <= ta:
            tn = tmin
        else:
            tn = ta
        if tn > horizon:
            win.add(t, horizon, tail - head, busy, busy_hi)
            break
        win.add(t, tn, tail - head, busy, busy_hi)
        t = tn

        if jmin >= 0 and tmin <= ta:
            j = jmin
            q = srv_q[j]
            cnt[q] += 1
            srv_t[j] = inf
            busy -= 1
            busy_hi -= srv_hi[j]
            if cnt[q] == k:
                a = arr[q]
                if a >= warmup:
                    s = t - a
                    soj_sum += s
                    soj_sq += s * s
                    soj_n += 1
                    if record:
                        log_a.append(a)
                        log_d.append(t)
                head += 1
                departures += 1
                for jj in range(n):
                    if jj != j and srv_q[jj] == q:
                        srv_t[jj] = inf
                        busy -= 1
                        busy_hi -= srv_hi[jj]
                order = range(n)
            else:
                order = (j,)
            for jj in order:
                if srv_q[jj] != q:
                    continue
                srv_q[jj] = q + 1
                if q + 1 < tail:
                    rng = server_rngs[jj]
                    hi = 1 if rng.random() < p else 0
                    srv_t[jj] = t + _expo(rng, mu1 if hi else mu0)
                    srv_hi[jj] = hi
                    busy += 1
                    busy_hi += hi
                    if t >= warmup:
                        starts += 1
                        high += hi
        else:
            q = tail
            arr.append(t)
            cnt.append(0)
            tail += 1
            arrivals += 1
            for j in range(n):
                if srv_q[j] == q:
                    rng = server_rngs[j]
                    hi = 1 if rng.random() < p else 0
                    srv_t[j] = t + _expo(rng, mu1 if hi else mu0)
                    srv_hi[j] = hi
                    busy += 1
                    busy_hi += hi
                    if t >= warmup:
                        starts += 1
                        high += hi
            ta = t + _expo(arrival_rng, lam)

    return _result(win, soj_sum, soj_sq, soj_n, starts, high, arrivals, departures, log_a, log_d)


def run_ctmc(n, k, lam, mu0, mu1, p, horizon, warmup, rng, record=False):
    """Trajectory sampler of the lumped (y, h) chain.

    One exponential holding time at the total exit rate, then one uniform
    selects the move (arrival, or a completion at stage i by a high- or
    low-rate server).  Rate re-draws and binomial pool draws follow.
    Sojourn times use FIFO order: the departing query is the oldest one.
    """
    win = _Window(warmup, horizon)
    y = [0] * k
    h = [0] * k
    N = [0] * k
    fifo = []
    fhead = 0
    starts = 0
    high = 0
    soj_sum = 0.0
    soj_sq = 0.0
    soj_n = 0
    arrivals = 0
    departures = 0
    log_a = [] if record else None
    log_d = [] if record else None
    t = 0.0

    while True:
        N[k - 1] = n - k + 1
        for i in range(k - 2, -1, -1):
            N[i] = 1 + (N[i + 1] if y[i + 1] == 0 else 0)
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
            win.add(t, horizon, R, M, Mh)
            break
        tn = t + -log(1.0 - rng.random()) / total
        if tn > horizon:
            win.add(t, horizon, R, M, Mh)
            break
        win.add(t, tn, R, M, Mh)
        t = tn

        x = rng.random() * total
        if x < lam:
            arrivals += 1
            fifo.append(t)
            if y[0] == 0:
                b = 0
                for _ in range(N[0]):
                    b += 1 if rng.random() < p else 0
                h[0] = b
                if t >= warmup:
                    starts += N[0]
                    high += b
            y[0] += 1
            continue

        x -= lam
        stage = -1
        cls = 0
        for i in range(k):
            if y[i] == 0:
                continue
            stage = i
            rh = h[i] * mu1
            rl = (N[i] - h[i]) * mu0
            if x < rh:
                cls = 1
                break
            if x < rh + rl:
                cls = 0
                break
            x -= rh + rl
        else:
            # rounding overshoot: attribute to the last occupied stage
            cls = 1 if h[stage] == N[stage] else 0

        i = stage
        redraw = 1 if rng.random() < p else 0
        if t >= warmup:
            starts += 1
            high += redraw
        pooled = i < k - 1 and y[i + 1] == 0
        y[i] -= 1
        if i < k - 1:
            y[i + 1] += 1
        else:
            a = fifo[fhead]
            fhead += 1
            departures += 1
            if a >= warmup:
                s = t - a
                soj_sum += s
                soj_sq += s * s
                soj_n += 1
                if record:
                    log_a.append(a)
                    log_d.append(t)
        if y[i] == 0:
            h[i] = 0
        elif pooled:
            h[i] = redraw
        else:
            h[i] += redraw - cls
        if pooled:
            b = 0
            for _ in range(N[i + 1]):
                b += 1 if rng.random() < p else 0
            h[i + 1] = b
            if t >= warmup:
                starts += N[i + 1]
                high += b

    return _result(win, soj_sum, soj_sq, soj_n, starts, high, arrivals, departures, log_a, log_d)
