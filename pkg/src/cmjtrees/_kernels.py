"""Compiled sampling kernels and the event loop.

Kernels take the caller's numpy ``Generator`` directly, so a simulation
consumes exactly that generator's stream. Families are flattened into
``(code, ip, fp, tab)`` arrays by :func:`encode`.
"""

from __future__ import annotations

import heapq
import math

import numba as nb
import numpy as np

from .families import (
    AffineWeights,
    Deterministic,
    DeterministicLifetime,
    ExponentialLifetime,
    FamilyModel,
    Kind,
    MixtureLifetime,
    UniformBinary,
)

PA, MARY, MEDIAN, FRAG, HOMOG = 0, 1, 2, 3, 4
_CODES = {
    Kind.GeneralPA: PA,
    Kind.MarySearch: MARY,
    Kind.MedianBST: MEDIAN,
    Kind.Fragmentation: FRAG,
    Kind.Homogeneous: HOMOG,
}

OK, EXTINCT, CAP, BAD_SPLIT = 0, 1, 2, 3


def as_generator(rng) -> np.random.Generator:
    """Coerce ``rng`` to a ``Generator`` backed by ``PCG64``.

    ``None`` and integers seed a fresh generator. Generators with another bit
    generator seed a ``PCG64`` child from their own stream.
    """
    if rng is None or isinstance(rng, (int, np.integer)):
        return np.random.Generator(np.random.PCG64(rng))
    if isinstance(rng, np.random.SeedSequence):
        return np.random.Generator(np.random.PCG64(rng))
    if not isinstance(rng, np.random.Generator):
        raise TypeError(f"expected a numpy Generator, seed or None, got {type(rng).__name__}")
    if type(rng.bit_generator) is np.random.PCG64:
        return rng
    return np.random.Generator(np.random.PCG64(int(rng.integers(2**63))))


def encode(family: FamilyModel):
    """Flatten a family into the arrays consumed by the kernels."""
    k, p = family.kind, family.params
    code = _CODES[k]
    ip = np.zeros(1, np.int64)
    fp = np.zeros(1, np.float64)
    tab = np.zeros((1, 2), np.float64)
    if k is Kind.GeneralPA:
        w = p.weights
        if isinstance(w, AffineWeights):
            ip = np.array([0], np.int64)
            fp = np.array([w.rho, float(w.beta)], np.float64)
        else:
            sup = w.support
            ip = np.array([len(sup)], np.int64)
            fp = np.array([w.tail_rate, 0.0, *sup], np.float64)
    elif k is Kind.MarySearch:
        ip = np.array([p.m], np.int64)
    elif k is Kind.MedianBST:
        ip = np.array([p.ell], np.int64)
    elif k is Kind.Fragmentation:
        d = p.dislocation
        if isinstance(d, UniformBinary):
            ip = np.array([2, 0], np.int64)
        elif isinstance(d, Deterministic):
            ip = np.array([d.b, 1], np.int64)
            fp = np.array(d.values, np.float64)
        else:
            ip = np.array([d.b, 2], np.int64)
            tab = d.table_array
    else:
        comps = p.lifetime.components if isinstance(p.lifetime, MixtureLifetime) else ((1.0, p.lifetime),)
        nc = len(comps)
        types, params = [], []
        for _, law in comps:
            if isinstance(law, ExponentialLifetime):
                types.append(0)
                params.append(law.rate)
            elif isinstance(law, DeterministicLifetime):
                types.append(1)
                params.append(law.duration)
        cum = np.cumsum([w for w, _ in comps])
        cum[-1] = 1.0
        ip = np.array([nc, *types], np.int64)
        fp = np.array([p.b, *cum, *params], np.float64)
    return code, ip, fp, np.ascontiguousarray(tab)


def is_lazy(code: int) -> bool:
    return code in (PA, HOMOG)


def buffer_sizes(code: int, ip: np.ndarray) -> tuple[int, int]:
    if code == MARY:
        return int(ip[0]), max(int(ip[0]) - 2, 1)
    if code == MEDIAN:
        return 2, int(ip[0]) + 1
    if code == FRAG:
        return int(ip[0]), 1
    return 1, 1


# ---------------------------------------------------------------------------
# compiled helpers
# ---------------------------------------------------------------------------


@nb.njit(inline="always", cache=True)
def _unif(rng):
    return rng.random()


@nb.njit(inline="always", cache=True)
def _expo(rng, rate):
    return -math.log1p(-rng.random()) / rate


@nb.njit(inline="always", cache=True)
def _pa_rate(k, ip, fp):
    if k < ip[0]:
        return fp[2 + k]
    r = fp[0] + fp[1] * k
    return r if r > 0.0 else 0.0


@nb.njit(inline="always", cache=True)
def _jump_delta(code, ip, j):
    """Size of characteristic jump ``j``; matches the deltas written by :func:`_spawn`."""
    if code == MEDIAN and j == ip[0]:
        return 1.0 - 2.0 * ip[0]
    return 1.0


@nb.njit(inline="always", cache=True)
def _spawn(code, ip, fp, tab, rng, offs, jt, jd):
    """Sample one individual's bounded birth ages and characteristic jumps.

    Returns ``(n_offsets, n_jumps, phi0, lifetime, status)``. Lazy families
    (GeneralPA, Homogeneous) return no offsets; their births come from
    :func:`_lazy_next`.
    """
    if code == PA:
        return 0, 0, 1.0, np.inf, OK
    if code == MARY:
        m = ip[0]
        s = 0.0
        for i in range(2, m):
            s += _expo(rng, float(i))
            jt[i - 2] = s
            jd[i - 2] = 1.0
        for k in range(m):
            offs[k] = s + _expo(rng, 1.0)
        # children are emitted in nondecreasing order
        offs[:m].sort()
        return m, m - 2, 1.0, np.inf, OK
    if code == MEDIAN:
        ell = ip[0]
        s = 0.0
        for i in range(1, ell + 2):
            s += _expo(rng, float(ell + i))
            jt[i - 1] = s
            jd[i - 1] = 1.0 if i <= ell else 1.0 - 2.0 * ell
        offs[0] = s
        offs[1] = s
        return 2, ell + 1, float(ell), np.inf, OK
    if code == FRAG:
        b = ip[0]
        mode = ip[1]
        total = 0.0
        n = 0
        if mode == 0:
            u = _unif(rng)
            while u == 0.0:
                u = _unif(rng)
            v1 = u
            v2 = 1.0 - u
            total = v1 + v2
            offs[0] = -math.log(v1)
            offs[1] = -math.log(v2)
            n = 2
        elif mode == 1:
            for i in range(b):
                v = fp[i]
                total += v
                if v > 0.0:
                    offs[n] = -math.log(v)
                    n += 1
        else:
            kk = tab.shape[1] - 1
            rem = 1.0
            for j in range(b - 1):
                x = _unif(rng) * kk
                i0 = int(x)
                if i0 >= kk:
                    i0 = kk - 1
                f = x - i0
                brk = tab[j, i0] + f * (tab[j, i0 + 1] - tab[j, i0])
                v = rem * brk
                rem = rem * (1.0 - brk)
                total += v
                if v > 0.0:
                    offs[n] = -math.log(v)
                    n += 1
            total += rem
            if rem > 0.0:
                offs[n] = -math.log(rem)
                n += 1
        if abs(total - 1.0) > 1e-12:
            return 0, 0, 1.0, np.inf, BAD_SPLIT
        offs[:n].sort()
        return n, 0, 1.0, np.inf, OK
    # HOMOG: lifetime from the normalised mixture
    nc = ip[0]
    u = _unif(rng)
    c = 0
    while c < nc - 1 and u >= fp[1 + c]:
        c += 1
    param = fp[1 + nc + c]
    if ip[1 + c] == 0:
        life = _expo(rng, param)
    else:
        life = param
    return 0, 0, 1.0, life, OK


@nb.njit(inline="always", cache=True)
def _lazy_next(code, ip, fp, k, age, lifetime, rng):
    """Age of the next birth after ``k`` births, the last at ``age``; inf if none."""
    if code == PA:
        r = _pa_rate(k, ip, fp)
        if r <= 0.0:
            return np.inf
        return age + _expo(rng, r)
    if code == HOMOG:
        nxt = age + _expo(rng, fp[0])
        if nxt < lifetime:
            return nxt
        return np.inf
    return np.inf


@nb.njit(cache=True)
def _spawn_arrays(code, ip, fp, tab, rng, nbuf, jbuf):
    offs = np.empty(nbuf)
    jt = np.empty(jbuf)
    jd = np.empty(jbuf)
    n, nj, phi0, life, status = _spawn(code, ip, fp, tab, rng, offs, jt, jd)
    return offs[:n].copy(), jt[:nj].copy(), jd[:nj].copy(), phi0, life, status


def spawn_arrays(code, ip, fp, tab, rng):
    nbuf, jbuf = buffer_sizes(code, ip)
    return _spawn_arrays(code, ip, fp, tab, rng, nbuf, jbuf)


@nb.njit(cache=True)
def lazy_next(code, ip, fp, k, age, lifetime, rng):
    return _lazy_next(code, ip, fp, k, age, lifetime, rng)


@nb.njit(cache=True)
def _xi_hat_samples(code, ip, fp, tab, theta, size, rng, nbuf, jbuf, min_births):
    """Samples of ``sum_i exp(-theta * xi_i)`` over one individual's births.

    For GeneralPA the sum is stopped after ``min_births`` births beyond the
    explicit prefix and the exact conditional mean of the remaining terms,
    ``exp(-theta * age) * w_k / (theta - slope)``, is added (unbiased).
    """
    out = np.empty(size)
    offs = np.empty(nbuf)
    jt = np.empty(jbuf)
    jd = np.empty(jbuf)
    for s in range(size):
        n, nj, phi0, life, status = _spawn(code, ip, fp, tab, rng, offs, jt, jd)
        acc = 0.0
        for i in range(n):
            acc += math.exp(-theta * offs[i])
        if code == PA:
            k = 0
            age = 0.0
            while True:
                r = _pa_rate(k, ip, fp)
                if r <= 0.0:
                    break
                if k >= ip[0] and k >= min_births:
                    acc += math.exp(-theta * age) * r / (theta - fp[1])
                    break
                age += _expo(rng, r)
                acc += math.exp(-theta * age)
                k += 1
        elif code == HOMOG:
            age = 0.0
            while True:
                age = _lazy_next(code, ip, fp, 0, age, life, rng)
                if age == np.inf:
                    break
                acc += math.exp(-theta * age)
        out[s] = acc
    return out


def xi_hat_samples(family: FamilyModel, theta: float, size: int, rng, min_births: int = 64) -> np.ndarray:
    """Monte Carlo draws of ``Xi_hat(theta)`` using the simulation's own sampler."""
    rng = as_generator(rng)
    code, ip, fp, tab = encode(family)
    nbuf, jbuf = buffer_sizes(code, ip)
    return _xi_hat_samples(
        code, ip, fp, tab, float(theta), int(size), rng, nbuf, jbuf, min_births
    )


# ---------------------------------------------------------------------------
# event loop
# ---------------------------------------------------------------------------


@nb.njit(cache=True)
def _grow_f(a, n):
    out = np.empty(n, a.dtype)
    out[: a.shape[0]] = a
    return out


@nb.njit(cache=True)
def _grow_i(a, n):
    out = np.empty(n, a.dtype)
    out[: a.shape[0]] = a
    return out


@nb.njit(cache=True)
def _grow_u(a, n):
    out = np.zeros(n, a.dtype)
    out[: a.shape[0]] = a
    return out


@nb.njit(cache=True)
def _run(code, ip, fp, tab, threshold, t_max, time_mode, p, rng, cap, full, clusters, nbuf, jbuf):
    """Grow the population until weight ``threshold`` (or clock ``t_max``).

    Events are ``(time, seq, payload)``. A payload ``q >= 0`` is a birth
    from parent ``q - 1`` (``q = 0`` for the ancestor); ``q < 0`` encodes
    jump ``j`` of ``node`` as ``-(1 + node * jbuf + j)``. Every event sharing
    a timestamp is processed before the stop check.
    """
    heap = [(0.0, 0, 0)]
    seq = 1
    capacity = 1024
    flags = np.zeros(capacity, np.uint8)  # bit0 clone, bit1 in root cluster
    nchild = np.zeros(capacity if code == PA else 1, np.int64)
    death = np.zeros(capacity if code == HOMOG else 1, np.float64)
    parent = np.zeros(capacity if full else 1, np.int64)
    sigma = np.zeros(capacity if full else 1, np.float64)
    cluster = np.zeros(capacity if clusters else 1, np.int64)
    csize = np.zeros(64 if clusters else 1, np.int64)
    jcap = 1024 if full else 1
    j_node = np.zeros(jcap, np.int64)
    j_time = np.zeros(jcap, np.float64)
    j_delta = np.zeros(jcap, np.float64)
    nj_log = 0

    offs = np.empty(nbuf)
    jt = np.empty(jbuf)
    jd = np.empty(jbuf)

    z = 0
    zphi = 0.0
    root = 0
    nmut = 0
    status = OK
    reached = False
    t = 0.0
    lazy_pa = code == PA
    lazy_h = code == HOMOG

    while len(heap) > 0:
        t = heap[0][0]
        if time_mode and t > t_max:
            break
        while len(heap) > 0 and heap[0][0] == t:
            ev = heapq.heappop(heap)
            q = ev[2]
            if q < 0:
                q = -q - 1
                node = q // jbuf
                delta = _jump_delta(code, ip, q - node * jbuf)
                zphi += delta
                if full:
                    if nj_log >= j_node.shape[0]:
                        j_node = _grow_i(j_node, 2 * nj_log)
                        j_time = _grow_f(j_time, 2 * nj_log)
                        j_delta = _grow_f(j_delta, 2 * nj_log)
                    j_node[nj_log] = node
                    j_time[nj_log] = t
                    j_delta[nj_log] = delta
                    nj_log += 1
                continue
            node = q - 1

            # birth of a new individual u from parent `node`
            if z >= cap:
                status = CAP
                break
            u = z
            z += 1
            if u >= capacity:
                capacity = min(2 * capacity, max(cap, 1024))
                if capacity <= u:
                    capacity = u + 1
                flags = _grow_u(flags, capacity)
                if lazy_pa:
                    nchild = _grow_i(nchild, capacity)
                if lazy_h:
                    death = _grow_f(death, capacity)
                if full:
                    parent = _grow_i(parent, capacity)
                    sigma = _grow_f(sigma, capacity)
                if clusters:
                    cluster = _grow_i(cluster, capacity)
            if node < 0:
                fl = 3
                cl = 0
            else:
                clone = True
                if p < 1.0:
                    clone = _unif(rng) < p
                if clone:
                    fl = 1 | (flags[node] & 2)
                    cl = cluster[node] if clusters else 0
                else:
                    fl = 0
                    nmut += 1
                    cl = nmut
            flags[u] = fl
            if fl & 2:
                root += 1
            if clusters:
                cluster[u] = cl
                if cl >= csize.shape[0]:
                    csize = _grow_i(csize, 2 * csize.shape[0])
                    csize[cl:] = 0
                csize[cl] += 1
            if full:
                parent[u] = node
                sigma[u] = t

            n_off, n_j, phi0, life, st = _spawn(code, ip, fp, tab, rng, offs, jt, jd)
            if st != OK:
                status = st
                break
            zphi += phi0
            if full:
                if nj_log >= j_node.shape[0]:
                    j_node = _grow_i(j_node, 2 * nj_log)
                    j_time = _grow_f(j_time, 2 * nj_log)
                    j_delta = _grow_f(j_delta, 2 * nj_log)
                j_node[nj_log] = u
                j_time[nj_log] = t
                j_delta[nj_log] = phi0
                nj_log += 1
            for i in range(n_off):
                heapq.heappush(heap, (t + offs[i], seq, u + 1))
                seq += 1
            for i in range(n_j):
                heapq.heappush(heap, (t + jt[i], seq, -(1 + u * jbuf + i)))
                seq += 1
            if lazy_pa:
                nchild[u] = 0
                nxt = _lazy_next(code, ip, fp, 0, t, np.inf, rng)
                if nxt < np.inf:
                    heapq.heappush(heap, (nxt, seq, u + 1))
                    seq += 1
                if node >= 0:
                    nchild[node] += 1
                    nxt = _lazy_next(code, ip, fp, nchild[node], t, np.inf, rng)
                    if nxt < np.inf:
                        heapq.heappush(heap, (nxt, seq, node + 1))
                        seq += 1
            elif lazy_h:
                death[u] = t + life
                nxt = _lazy_next(code, ip, fp, 0, t, death[u], rng)
                if nxt < np.inf:
                    heapq.heappush(heap, (nxt, seq, u + 1))
                    seq += 1
                if node >= 0:
                    nxt = _lazy_next(code, ip, fp, 0, t, death[node], rng)
                    if nxt < np.inf:
                        heapq.heappush(heap, (nxt, seq, node + 1))
                        seq += 1
        if status != OK:
            break
        if not time_mode and zphi >= threshold:
            reached = True
            break

    if status == OK and not time_mode and not reached:
        status = EXTINCT
    tau = t_max if time_mode else t
    clone_out = np.zeros(z if full else 0, np.uint8)
    root_out = np.zeros(z if full else 0, np.uint8)
    if full:
        for i in range(z):
            clone_out[i] = flags[i] & 1
            root_out[i] = (flags[i] >> 1) & 1
    par_out = parent[:z].copy() if full else np.zeros(0, np.int64)
    sig_out = sigma[:z].copy() if full else np.zeros(0, np.float64)
    cs_out = csize[: nmut + 1].copy() if clusters else np.zeros(0, np.int64)
    return (
        status,
        tau,
        z,
        zphi,
        root,
        nmut,
        par_out,
        sig_out,
        clone_out,
        root_out,
        j_node[:nj_log].copy(),
        j_time[:nj_log].copy(),
        j_delta[:nj_log].copy(),
        cs_out,
    )


def run(family_arrays, threshold, t_max, time_mode, p, rng, cap, full, clusters):
    code, ip, fp, tab = family_arrays
    nbuf, jbuf = buffer_sizes(code, ip)
    return _run(
        code, ip, fp, tab, float(threshold), float(t_max), bool(time_mode), float(p),
        rng, int(cap), bool(full), bool(clusters), nbuf, jbuf,
    )
