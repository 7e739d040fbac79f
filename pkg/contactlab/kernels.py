"""Compiled event loops.

All kernels take an explicit 32-bit ``seed`` and reseed numba's per-thread
generator on entry, so a call is a pure function of its arguments and
concurrent calls from a thread pool do not share state.
"""
import numpy as np
from numba import njit

# Stop reason codes shared with contactlab.simulate
EXTINCTION = 0
HORIZON = 1
VERTEX_INFECTED = 2
COUNT_AT_LEAST = 3
COUNT_AT_MOST = 4
LEAF_AT_LEAST = 5
LEAF_AT_MOST = 6

NO_LIMIT = -1


@njit(cache=True, nogil=True)
def _fenwick_add(tree, i, delta):
    n = tree.size - 1
    i += 1
    while i <= n:
        tree[i] += delta
        i += i & (-i)


@njit(cache=True, nogil=True)
def _fenwick_find(tree, top, target):
    # Smallest 0-based index whose prefix sum exceeds target, and target minus
    # the prefix sum of the entries before it.
    n = tree.size - 1
    pos = 0
    step = top
    while step > 0:
        nxt = pos + step
        if nxt <= n and tree[nxt] <= target:
            pos = nxt
            target -= tree[nxt]
        step >>= 1
    return pos, target


@njit(cache=True, nogil=True)
def _fenwick_total(tree):
    total = 0
    i = tree.size - 1
    while i > 0:
        total += tree[i]
        i -= i & (-i)
    return total


@njit(cache=True, nogil=True)
def _infect(u, indptr, indices, infected, members, position, weight, tree, count):
    # u becomes infected: every infected neighbor slot loses u as a target,
    # and u gains one slot per susceptible neighbor slot.
    infected[u] = True
    members[count] = u
    position[u] = count
    own = 0
    delta = 0
    for e in range(indptr[u], indptr[u + 1]):
        w = indices[e]
        if w == u:
            continue
        if infected[w]:
            weight[w] -= 1
            _fenwick_add(tree, w, -1)
            delta -= 1
        else:
            own += 1
    weight[u] = own
    _fenwick_add(tree, u, own)
    return count + 1, delta + own


@njit(cache=True, nogil=True)
def _recover(u, indptr, indices, infected, members, position, weight, tree, count):
    infected[u] = False
    last = members[count - 1]
    members[position[u]] = last
    position[last] = position[u]
    delta = -weight[u]
    _fenwick_add(tree, u, -weight[u])
    weight[u] = 0
    for e in range(indptr[u], indptr[u + 1]):
        w = indices[e]
        if w == u:
            continue
        if infected[w]:
            weight[w] += 1
            _fenwick_add(tree, w, 1)
            delta += 1
    return count - 1, delta


@njit(cache=True, nogil=True)
def _audit(indptr, indices, infected, weight, tree, slots):
    # Recompute every susceptible-slot count from scratch.
    n = infected.size
    total = 0
    ok = True
    for u in range(n):
        own = 0
        if infected[u]:
            for e in range(indptr[u], indptr[u + 1]):
                w = indices[e]
                if w != u and not infected[w]:
                    own += 1
        if own != weight[u]:
            ok = False
        total += own
    if total != slots or _fenwick_total(tree) != slots:
        ok = False
    return ok


@njit(cache=True, nogil=True)
def run_graph(indptr, indices, lam, initial, horizon, target, count_hi, count_lo,
              flagged, watch, sample_dt, max_samples, audit_every, seed):
    """Gillespie run of the contact process on a multigraph.

    Recovery at rate 1 per infected vertex, infection at rate ``lam`` per
    infected-to-susceptible adjacency slot (self-loops excluded). Stops on the
    first of: ``target`` infected, count >= ``count_hi``, count <= ``count_lo``,
    extinction, ``horizon``. Negative limits are disabled.
    """
    np.random.seed(seed)
    n = indptr.size - 1
    infected = np.zeros(n, dtype=np.bool_)
    members = np.empty(max(n, 1), dtype=np.int64)
    position = np.zeros(n, dtype=np.int64)
    weight = np.zeros(n, dtype=np.int64)
    tree = np.zeros(n + 1, dtype=np.int64)
    top = 1
    while top * 2 <= n:
        top *= 2

    count = 0
    slots = 0
    touched = False
    for i in range(initial.size):
        u = initial[i]
        if not infected[u]:
            count, delta = _infect(u, indptr, indices, infected, members, position, weight, tree, count)
            slots += delta
            if flagged.size > 0 and flagged[u]:
                touched = True

    sample_times = np.empty(max_samples, dtype=np.float64)
    sample_counts = np.empty(max_samples, dtype=np.int64)
    sample_watch = np.zeros(max_samples, dtype=np.bool_)
    n_samples = 0
    next_sample = 0.0

    t = 0.0
    events = 0
    audit_failures = 0
    reason = HORIZON
    while True:
        if target >= 0 and infected[target]:
            reason = VERTEX_INFECTED
            break
        if count_hi >= 0 and count >= count_hi:
            reason = COUNT_AT_LEAST
            break
        if count_lo >= 0 and count <= count_lo:
            reason = COUNT_AT_MOST
            break
        if count == 0:
            reason = EXTINCTION
            break

        total = count + lam * slots
        t_next = t + np.random.exponential(1.0) / total
        while sample_dt > 0.0 and n_samples < max_samples and next_sample <= t_next and next_sample <= horizon:
            sample_times[n_samples] = next_sample
            sample_counts[n_samples] = count
            if watch >= 0:
                sample_watch[n_samples] = infected[watch]
            n_samples += 1
            next_sample = n_samples * sample_dt
        if t_next > horizon:
            t = horizon
            reason = HORIZON
            break
        t = t_next

        draw = np.random.random() * total
        if draw < count:
            u = members[min(int(draw), count - 1)]
            count, delta = _recover(u, indptr, indices, infected, members, position, weight, tree, count)
        else:
            c = min(int((draw - count) / lam), slots - 1)
            u, offset = _fenwick_find(tree, top, c)
            w = -1
            for e in range(indptr[u], indptr[u + 1]):
                x = indices[e]
                if x != u and not infected[x]:
                    if offset == 0:
                        w = x
                        break
                    offset -= 1
            count, delta = _infect(w, indptr, indices, infected, members, position, weight, tree, count)
            if flagged.size > 0 and flagged[w]:
                touched = True
        slots += delta
        events += 1

        if audit_every > 0 and events % audit_every == 0:
            if not _audit(indptr, indices, infected, weight, tree, slots):
                audit_failures += 1

    if reason == EXTINCTION and horizon < np.inf:
        while sample_dt > 0.0 and n_samples < max_samples and next_sample <= horizon:
            sample_times[n_samples] = next_sample
            sample_counts[n_samples] = 0
            n_samples += 1
            next_sample = n_samples * sample_dt

    return (reason, t, events, count, touched, audit_failures,
            sample_times[:n_samples], sample_counts[:n_samples], sample_watch[:n_samples])


@njit(cache=True, nogil=True)
def run_star(k, lam, i0, j0, horizon, center_target, count_hi, count_lo, leaf_hi, leaf_lo,
             sample_dt, max_samples, seed):
    """Run the (infected leaves, center) chain of the contact process on a k-star."""
    np.random.seed(seed)
    i = i0
    j = j0
    sample_times = np.empty(max_samples, dtype=np.float64)
    sample_counts = np.empty(max_samples, dtype=np.int64)
    sample_watch = np.zeros(max_samples, dtype=np.bool_)
    n_samples = 0
    next_sample = 0.0
    t = 0.0
    events = 0
    reason = HORIZON
    while True:
        if center_target and j == 1:
            reason = VERTEX_INFECTED
            break
        if count_hi >= 0 and i + j >= count_hi:
            reason = COUNT_AT_LEAST
            break
        if count_lo >= 0 and i + j <= count_lo:
            reason = COUNT_AT_MOST
            break
        if leaf_hi >= 0 and i >= leaf_hi:
            reason = LEAF_AT_LEAST
            break
        if leaf_lo >= 0 and i <= leaf_lo:
            reason = LEAF_AT_MOST
            break
        if i == 0 and j == 0:
            reason = EXTINCTION
            break

        if j == 1:
            up = lam * (k - i)
            total = up + i + 1.0
        else:
            up = lam * i
            total = up + i
        t_next = t + np.random.exponential(1.0) / total
        while sample_dt > 0.0 and n_samples < max_samples and next_sample <= t_next and next_sample <= horizon:
            sample_times[n_samples] = next_sample
            sample_counts[n_samples] = i + j
            sample_watch[n_samples] = j == 1
            n_samples += 1
            next_sample = n_samples * sample_dt
        if t_next > horizon:
            t = horizon
            break
        t = t_next

        draw = np.random.random() * total
        if draw < up:
            if j == 1:
                i += 1
            else:
                j = 1
        elif draw < up + i:
            i -= 1
        else:
            j = 0
        events += 1

    if reason == EXTINCTION and horizon < np.inf:
        while sample_dt > 0.0 and n_samples < max_samples and next_sample <= horizon:
            sample_times[n_samples] = next_sample
            sample_counts[n_samples] = 0
            n_samples += 1
            next_sample = n_samples * sample_dt

    return (reason, t, events, i, j,
            sample_times[:n_samples], sample_counts[:n_samples], sample_watch[:n_samples])


@njit(cache=True, nogil=True)
def _lost_infections(log_q):
    # Shifted geometric with P(N >= j) = q^j, q = 1/(1+lambda)
    return int(np.floor(np.log(1.0 - np.random.random()) / log_q))


@njit(cache=True, nogil=True)
def _y_step(y, cap, p_down, p_up, log_q):
    u = np.random.random()
    if u < p_down:
        return max(y - 1, 0)
    if u < p_down + p_up:
        return min(y + 1, cap)
    return max(y - _lost_infections(log_q), 0)


@njit(cache=True, nogil=True)
def y_hits_low(cap, p_down, p_up, log_q, a, b, upper, reps, seed):
    """Count runs of the reduced star chain from ``a`` reaching ``<= b`` before ``>= upper``."""
    np.random.seed(seed)
    hits = 0
    for _ in range(reps):
        y = a
        while b < y < upper:
            y = _y_step(y, cap, p_down, p_up, log_q)
        if y <= b:
            hits += 1
    return hits


@njit(cache=True, nogil=True)
def y_dips_before_return(cap, p_down, p_up, log_q, b, reps, seed):
    """Count runs from ``cap`` that reach ``<= b`` before coming back to ``cap``."""
    np.random.seed(seed)
    hits = 0
    for _ in range(reps):
        y = cap
        while y == cap:
            y = _y_step(y, cap, p_down, p_up, log_q)
        while b < y < cap:
            y = _y_step(y, cap, p_down, p_up, log_q)
        if y <= b:
            hits += 1
    return hits


@njit(cache=True, nogil=True)
def walk_hits_zero(x0, m, p_up, reps, seed):
    """Count runs of the +1/-1 walk from ``x0`` that reach 0 before ``m``."""
    np.random.seed(seed)
    hits = 0
    for _ in range(reps):
        x = x0
        while 0 < x < m:
            if np.random.random() < p_up:
                x += 1
            else:
                x -= 1
        if x == 0:
            hits += 1
    return hits


@njit(cache=True, nogil=True)
def sample_lost_infections(lam, size, seed):
    np.random.seed(seed)
    log_q = -np.log1p(lam)
    out = np.empty(size, dtype=np.int64)
    for s in range(size):
        out[s] = _lost_infections(log_q)
    return out
