"""Independent reference implementations the library is checked against.

Everything here deliberately uses the naive route (explicit matrix
inverses, cofactor expansions, per-step recomputation, plain recursion)
so a bug in the optimized path cannot hide in its oracle.
"""

import heapq
import itertools
import math

import numpy as np


def dijkstra_all_pairs(net):
    """Directed all-pairs shortest paths by repeated single-source Dijkstra."""
    import roadfuse as rf

    n = net.n_segments
    adj = [[] for _ in range(n)]
    for s, t in net.edges:
        adj[s].append((t, rf.edge_weight(net, s, t)))
    dist = np.full((n, n), np.inf)
    for source in range(n):
        d = dist[source]
        d[source] = 0.0
        heap = [(0.0, source)]
        while heap:
            cost, v = heapq.heappop(heap)
            if cost > d[v]:
                continue
            for w, weight in adj[v]:
                alt = cost + weight
                if alt < d[w]:
                    d[w] = alt
                    heapq.heappush(heap, (alt, w))
    return dist


def metric_closure(d):
    """Naive triple-loop shortest-path closure of a symmetric matrix."""
    out = d.copy()
    n = out.shape[0]
    for k in range(n):
        for i in range(n):
            for j in range(n):
                if out[i, k] + out[k, j] < out[i, j]:
                    out[i, j] = out[i, k] + out[k, j]
    return out


def naive_gp_posterior(kernel, indices, values, targets, observation_noise=False):
    """Literal transcription of the exact GP update with explicit inverses."""
    y = list(targets)
    d = list(indices)
    mu = kernel.mean_of(y)
    cov = kernel.prior_covariance(y, y)
    if d:
        k_dd = kernel.prior_covariance(d, d, include_noise=True)
        inv = np.linalg.inv(k_dd)
        k_yd = kernel.prior_covariance(y, d)
        mu = mu + k_yd @ inv @ (np.asarray(values) - kernel.mean_of(d))
        cov = cov - k_yd @ inv @ k_yd.T
    if observation_noise:
        cov = cov + kernel.hyper.noise_variance * np.eye(len(y))
    return mu, cov


def cofactor_det(a):
    """Recursive cofactor-expansion determinant."""
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    if n == 0:
        return 1.0
    if n == 1:
        return float(a[0, 0])
    total = 0.0
    for j in range(n):
        minor = np.delete(np.delete(a, 0, axis=0), j, axis=1)
        total += ((-1.0) ** j) * a[0, j] * cofactor_det(minor)
    return total


def naive_conditional(kernel, support, indices):
    u = list(support.indices)
    k_dd = kernel.prior_covariance(indices, indices, include_noise=True)
    if not u:
        return k_dd
    k_du = kernel.prior_covariance(indices, u)
    inv = np.linalg.inv(kernel.prior_covariance(u, u))
    return k_dd - k_du @ inv @ k_du.T


def naive_local_summary(kernel, support, obs):
    """Explicit-inverse transcription of the local-summary pair."""
    u = list(support.indices)
    m = len(u)
    if len(obs) == 0:
        return np.zeros(m), np.zeros((m, m))
    d = list(obs.indices)
    cond_inv = np.linalg.inv(naive_conditional(kernel, support, d))
    k_ud = kernel.prior_covariance(u, d)
    z_dot = k_ud @ cond_inv @ (obs.values - kernel.mean_of(d))
    s_dot = k_ud @ cond_inv @ k_ud.T
    return z_dot, s_dot


def naive_pitc(kernel, support, blocks, targets):
    """Explicit-inverse transcription of the centralized sparse update."""
    y = list(targets)
    d = [i for b in blocks for i in b.indices]
    z = np.concatenate([b.values for b in blocks]) if d else np.zeros(0)
    mu = kernel.mean_of(y)
    prior = kernel.prior_covariance(y, y)
    if not d:
        return mu, prior
    u = list(support.indices)
    inv_uu = np.linalg.inv(kernel.prior_covariance(u, u))

    def gamma(a, b):
        return kernel.prior_covariance(a, u) @ inv_uu @ kernel.prior_covariance(u, b)

    lam = np.zeros((len(d), len(d)))
    at = 0
    for b in blocks:
        k = len(b)
        if k:
            lam[at:at + k, at:at + k] = naive_conditional(kernel, support, list(b.indices))
        at += k
    middle = np.linalg.inv(gamma(d, d) + lam)
    mu = mu + gamma(y, d) @ middle @ (z - kernel.mean_of(d))
    cov = prior - gamma(y, d) @ middle @ gamma(d, y)
    return mu, cov


def naive_fused_covariance_blocks(kernel, summary, blocks):
    """Dense blockwise fused covariance: full conditional inside each block,
    cross terms through the explicit global-summary inverse everywhere."""
    segs = [s for b in blocks for s in b]
    u = list(summary.support.indices)
    inv_uu = np.linalg.inv(kernel.prior_covariance(u, u))
    inv_dd = np.linalg.inv(summary.S_ddot)
    k_su = kernel.prior_covariance(segs, u)
    cov = k_su @ inv_dd @ k_su.T
    at = 0
    for b in blocks:
        k = len(b)
        if k:
            sl = slice(at, at + k)
            prior = kernel.prior_covariance(list(b), list(b))
            k_bu = kernel.prior_covariance(list(b), u)
            cov[sl, sl] += prior - k_bu @ inv_uu @ k_bu.T
        at += k
    return cov


def phi_product(kernel, summary, s, t):
    """Cross-correlation entry via the explicit global-summary inverse."""
    u = list(summary.support.indices)
    inv = np.linalg.inv(summary.S_ddot)
    k_su = kernel.prior_covariance([s], u)[0]
    k_tu = kernel.prior_covariance([t], u)[0]
    return float(k_su @ inv @ k_tu)


def greedy_select_oracle(kernel, candidates, count):
    """Quadratic-cost greedy selection: every step reconditions from scratch
    with explicit inverses."""
    remaining = sorted(candidates)
    chosen = []
    for _ in range(count):
        best, best_var = None, -np.inf
        for c in remaining:
            prior = kernel.prior_covariance([c], [c])[0, 0]
            if chosen:
                k_cu = kernel.prior_covariance([c], chosen)[0]
                inv = np.linalg.inv(kernel.prior_covariance(chosen, chosen))
                var = prior - float(k_cu @ inv @ k_cu)
            else:
                var = prior
            if var > best_var:
                best, best_var = c, var
        chosen.append(best)
        remaining.remove(best)
    return chosen


def recursive_walks(net, origin, length):
    """Brute-force walk enumeration by plain recursion over neighbor tuples."""
    results = []

    def go(node, steps):
        if len(steps) == length:
            results.append(tuple(steps))
            return
        nbrs = net.out_neighbors(node)
        if not nbrs:
            results.append(tuple(steps))
            return
        for nxt in nbrs:
            go(nxt, steps + [nxt])

    go(origin, [])
    return sorted(results)


def union_find_components(adjacency):
    """Connected components via union-find."""
    a = np.asarray(adjacency)
    n = a.shape[0]
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i in range(n):
        for j in range(i + 1, n):
            if a[i, j]:
                ri, rj = find(i), find(j)
                if ri != rj:
                    parent[ri] = rj
    groups = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    return sorted(tuple(sorted(g)) for g in groups.values())


def gaussian_log_density(z, mean, variance):
    return -0.5 * math.log(2.0 * math.pi * variance) - 0.5 * (z - mean) ** 2 / variance


def exhaustive_joint_argmax(entropies_by_combo):
    """Argmax over an explicit dict of combo -> entropy, lexicographic ties."""
    best_combo, best = None, -np.inf
    for combo in sorted(entropies_by_combo):
        if entropies_by_combo[combo] > best:
            best_combo, best = combo, entropies_by_combo[combo]
    return best_combo, best


def all_combos(walk_counts):
    return list(itertools.product(*(range(c) for c in walk_counts)))
