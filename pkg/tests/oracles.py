"""Brute-force reference implementations used only by the tests.

Nothing here imports the algorithms under test: d-separation is decided by
explicit path enumeration, conditional independence by summing an enumerated
joint, and Jacobians by central differences.
"""

import itertools

import numpy as np


# -- graphs -------------------------------------------------------------------

def _desc(edges, v):
    out, stack = {v}, [v]
    while stack:
        u = stack.pop()
        for a, b in edges:
            if a == u and b not in out:
                out.add(b)
                stack.append(b)
    return out


def simple_paths(nodes, edges, s, t):
    nbrs = {v: set() for v in nodes}
    for a, b in edges:
        nbrs[a].add(b)
        nbrs[b].add(a)
    out = []

    def walk(path):
        if path[-1] == t:
            out.append(tuple(path))
            return
        for w in sorted(nbrs[path[-1]]):
            if w not in path:
                walk(path + [w])

    walk([s])
    return out


def path_open(edges, path, z):
    for i in range(1, len(path) - 1):
        p, v, n = path[i - 1], path[i], path[i + 1]
        if (p, v) in edges and (n, v) in edges:
            if not (_desc(edges, v) & set(z)):
                return False
        elif v in z:
            return False
    return True


def dsep_by_paths(nodes, edges, xs, ys, z):
    edges = set(edges)
    for x in xs:
        for y in ys:
            for p in simple_paths(nodes, edges, x, y):
                if path_open(edges, p, z):
                    return False
    return True


def random_dag(rng, k, p_edge=0.4):
    nodes = [f"V{i}" for i in range(k)]
    perm = rng.permutation(k)
    edges = [
        (nodes[perm[i]], nodes[perm[j]])
        for i in range(k) for j in range(i + 1, k)
        if rng.random() < p_edge
    ]
    return nodes, edges


# -- distributions ------------------------------------------------------------

def random_joint(rng, nodes, edges, lo=0.05, hi=0.95):
    """Exact joint of binary nodes with random CPTs, columns in ``nodes`` order."""
    k = len(nodes)
    parents = {v: sorted(a for a, b in edges if b == v) for v in nodes}
    cpt = {v: {pa: rng.uniform(lo, hi) for pa in itertools.product((0, 1), repeat=len(parents[v]))}
           for v in nodes}
    configs = np.array(list(itertools.product((0, 1), repeat=k)))
    idx = {v: i for i, v in enumerate(nodes)}
    prob = np.ones(len(configs))
    for r, c in enumerate(configs):
        for v in nodes:
            pa = tuple(int(c[idx[u]]) for u in parents[v])
            p1 = cpt[v][pa]
            prob[r] *= p1 if c[idx[v]] == 1 else 1 - p1
    return configs, prob, idx


def conditional_mutual_information(configs, prob, idx, xs, ys, zs):
    def marg(cols):
        table = {}
        for c, p in zip(configs, prob):
            key = tuple(int(c[idx[v]]) for v in cols)
            table[key] = table.get(key, 0.0) + p
        return table

    pxyz = marg(list(xs) + list(ys) + list(zs))
    pxz = marg(list(xs) + list(zs))
    pyz = marg(list(ys) + list(zs))
    pz = marg(list(zs))
    nx, ny = len(xs), len(ys)
    total = 0.0
    for key, p in pxyz.items():
        if p <= 0:
            continue
        x, y, z = key[:nx], key[nx:nx + ny], key[nx + ny:]
        total += p * np.log(p * pz[z] / (pxz[x + z] * pyz[y + z]))
    return max(total, 0.0)


# -- calculus ----------------------------------------------------------------

def numeric_jacobian(fn, theta, h=1e-6):
    theta = np.asarray(theta, dtype=float)
    base = fn(theta)
    jac = np.empty((len(base), len(theta)))
    for j in range(len(theta)):
        e = np.zeros_like(theta)
        e[j] = h
        jac[:, j] = (fn(theta + e) - fn(theta - e)) / (2 * h)
    return jac
