"""Compiled simulation loops for the three built-in environments.

Each kernel consumes the ``numpy.random.Generator`` it is handed in exactly the
order the pure-Python reference path does (action coin, then environment
noise; the erasure coin is drawn every step whether or not it is used), so a kernel and ``renewal.collect_cycle`` fed the same generator
produce the same trajectory.

Batch kernels return ``(R, T, L, gR, gT, end_state, done)`` where ``done`` is
the number of completed cycles; ``done < n_cycles`` signals truncation of cycle
``done`` after ``max_steps`` steps.
"""
import numpy as np
from numba import njit

NO_GRAD = 0
UNBIASED = 1
BIASED = 2


@njit(cache=True)
def _first_above(cdf, u):
    n = cdf.shape[0]
    for i in range(n):
        if u < cdf[i]:
            return i
    return n - 1


@njit(cache=True)
def tabular_batch(cdf_p, r, cdf_pi, probs, temperature, state, s0, gamma,
                  n_cycles, max_steps, grad_mode, rng):
    n_s, n_a = r.shape
    dim = n_s * n_a
    R = np.zeros(n_cycles)
    T = np.zeros(n_cycles)
    L = np.zeros(n_cycles, dtype=np.int64)
    gdim = dim if grad_mode != NO_GRAD else 0
    gR = np.zeros((n_cycles, gdim))
    gT = np.zeros((n_cycles, gdim))
    z = np.zeros(gdim)
    s = state
    for n in range(n_cycles):
        disc = 1.0
        z[:] = 0.0
        k = 0
        while True:
            if k >= max_steps:
                L[n] = k
                return R, T, L, gR, gT, s, n
            a = _first_above(cdf_pi[s], rng.random())
            s_next = _first_above(cdf_p[a, s], rng.random())
            rew = r[s, a]
            R[n] += disc * rew
            T[n] += disc
            if grad_mode == UNBIASED:
                for b in range(n_a):
                    ind = 1.0 if b == a else 0.0
                    z[s * n_a + b] += (ind - probs[s, b]) / temperature
                w = disc * rew
                for i in range(dim):
                    gR[n, i] += w * z[i]
                    gT[n, i] += disc * z[i]
            elif grad_mode == BIASED:
                for i in range(dim):
                    z[i] *= gamma
                for b in range(n_a):
                    ind = 1.0 if b == a else 0.0
                    z[s * n_a + b] += (ind - probs[s, b]) / temperature
                for i in range(dim):
                    gR[n, i] += rew * z[i]
                    gT[n, i] += z[i]
            disc *= gamma
            k += 1
            s = s_next
            if s_next == s0:
                break
        L[n] = k
    return R, T, L, gR, gT, s, n_cycles


@njit(cache=True)
def event_batch(alpha, lam, p_d, theta, state, s0, gamma, n_cycles, max_steps, rng):
    R = np.zeros(n_cycles)
    T = np.zeros(n_cycles)
    L = np.zeros(n_cycles, dtype=np.int64)
    e = state
    for n in range(n_cycles):
        disc = 1.0
        k = 0
        while True:
            if k >= max_steps:
                L[n] = k
                return R, T, L, e, n
            a = 1 if abs(e) >= theta else 0
            post = e
            u = rng.random()
            if a == 1 and u >= p_d:
                post = 0.0
            nxt = alpha * post + rng.standard_normal()
            rew = -(lam * a + post * post)
            R[n] += disc * rew
            T[n] += disc
            disc *= gamma
            k += 1
            e = nxt
            if post == s0:
                break
        L[n] = k
    return R, T, L, e, n_cycles


@njit(cache=True)
def _inventory_cost(s, a_p, a_h, a_b, g):
    hold = a_h * s if s >= 0 else -a_b * s
    return a_p * s * (1 - g) / g + hold


@njit(cache=True)
def inventory_batch(a_p, a_h, a_b, rate, discount, lo, hi, theta, state, s0, rho,
                    gamma, n_cycles, max_steps, rng):
    R = np.zeros(n_cycles)
    T = np.zeros(n_cycles)
    L = np.zeros(n_cycles, dtype=np.int64)
    s = state
    for n in range(n_cycles):
        disc = 1.0
        k = 0
        while True:
            if k >= max_steps:
                L[n] = k
                return R, T, L, s, n
            order = theta - s if theta - s > 0.0 else 0.0
            demand = -np.log1p(-rng.random()) / rate
            nxt = min(max(s + order - demand, lo), hi)
            rew = -_inventory_cost(nxt, a_p, a_h, a_b, discount)
            R[n] += disc * rew
            T[n] += disc
            disc *= gamma
            k += 1
            s = nxt
            if abs(nxt - s0) <= rho:
                break
        L[n] = k
    return R, T, L, s, n_cycles


@njit(cache=True)
def tabular_returns(cdf_p, r, cdf_pi, s0, gamma, horizon, reps, rng):
    out = np.zeros(reps)
    for i in range(reps):
        s = s0
        disc = 1.0
        acc = 0.0
        for _ in range(horizon):
            a = _first_above(cdf_pi[s], rng.random())
            s_next = _first_above(cdf_p[a, s], rng.random())
            acc += disc * r[s, a]
            disc *= gamma
            s = s_next
        out[i] = acc
    return out


@njit(cache=True)
def event_returns(alpha, lam, p_d, theta, s0, gamma, horizon, reps, rng):
    out = np.zeros(reps)
    for i in range(reps):
        e = alpha * s0 + rng.standard_normal()
        disc = 1.0
        acc = 0.0
        for _ in range(horizon):
            a = 1 if abs(e) >= theta else 0
            post = e
            u = rng.random()
            if a == 1 and u >= p_d:
                post = 0.0
            nxt = alpha * post + rng.standard_normal()
            acc += disc * -(lam * a + post * post)
            disc *= gamma
            e = nxt
        out[i] = acc
    return out


@njit(cache=True)
def inventory_returns(a_p, a_h, a_b, rate, discount, lo, hi, theta, s0, gamma,
                      horizon, reps, rng):
    out = np.zeros(reps)
    for i in range(reps):
        s = s0
        disc = 1.0
        acc = 0.0
        for _ in range(horizon):
            order = theta - s if theta - s > 0.0 else 0.0
            demand = -np.log1p(-rng.random()) / rate
            nxt = min(max(s + order - demand, lo), hi)
            acc += disc * -_inventory_cost(nxt, a_p, a_h, a_b, discount)
            disc *= gamma
            s = nxt
        out[i] = acc
    return out


@njit(cache=True)
def actor_critic(cdf_p, r, theta, lo, hi, temperature, s0, gamma, lam, beta,
                 alpha, beta1, beta2, eps, n_steps, record_every, rng):
    """Gibbs actor, tabular TD(lambda) critic with accumulating traces.

    The actor ascends ``td_error * score`` through Adam. Returns the critic,
    the final parameters and snapshots ``(steps, theta, V[s0])`` taken every
    ``record_every`` steps.
    """
    n_s, n_a = r.shape
    dim = n_s * n_a
    th = theta.copy()
    V = np.zeros(n_s)
    e = np.zeros(n_s)
    m = np.zeros(dim)
    v = np.zeros(dim)
    probs = np.zeros(n_a)
    cdf = np.zeros(n_a)
    n_rec = n_steps // record_every
    rec_steps = np.zeros(n_rec, dtype=np.int64)
    rec_theta = np.zeros((n_rec, dim))
    rec_v0 = np.zeros(n_rec)
    g = np.zeros(dim)
    s = s0
    j = 0
    for t in range(n_steps):
        base = s * n_a
        zmax = th[base] / temperature
        for b in range(1, n_a):
            zmax = max(zmax, th[base + b] / temperature)
        tot = 0.0
        for b in range(n_a):
            probs[b] = np.exp(th[base + b] / temperature - zmax)
            tot += probs[b]
        acc = 0.0
        for b in range(n_a):
            probs[b] = probs[b] / tot
            acc += probs[b]
            cdf[b] = acc
        a = _first_above(cdf, rng.random())
        s_next = _first_above(cdf_p[a, s], rng.random())
        delta = r[s, a] + gamma * V[s_next] - V[s]
        for i in range(n_s):
            e[i] *= gamma * lam
        e[s] += 1.0
        for i in range(n_s):
            V[i] += beta * delta * e[i]
        if alpha != 0.0:
            g[:] = 0.0
            for b in range(n_a):
                ind = 1.0 if b == a else 0.0
                g[base + b] = delta * (ind - probs[b]) / temperature
            k = t + 1
            c1 = 1.0 - beta1 ** k
            c2 = 1.0 - beta2 ** k
            for i in range(dim):
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i]
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i]
                step = alpha * (m[i] / c1) / (np.sqrt(v[i] / c2) + eps)
                th[i] = min(max(th[i] + step, lo[i]), hi[i])
        s = s_next
        if (t + 1) % record_every == 0 and j < n_rec:
            rec_steps[j] = t + 1
            rec_theta[j] = th
            rec_v0[j] = V[s0]
            j += 1
    return V, th, rec_steps, rec_theta, rec_v0
