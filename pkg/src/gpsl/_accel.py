"""Inner-loop kernels: numba-compiled versions with pure numpy fallbacks.

Set ``GPSL_DISABLE_NUMBA=1`` in the environment (before import) to force the
numpy path. The numba path is also skipped when numba cannot be imported.
Both paths are importable explicitly (``*_numpy`` / ``*_numba``) so tests and
the benchmark can compare them.

Conventions: ``dep`` is an ``(NL, R)`` integer array of dependent label ids,
negative when inactive (missing or out of range); ``y`` uses -1 for missing;
``G`` is an ``(R, J, J)`` array with ``G[d, a, b]`` the score of dependent
label ``a`` followed by target label ``b``.
"""

from __future__ import annotations

import os

import numpy as np

_DISABLED = os.environ.get("GPSL_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}

try:
    import numba
    from numba import njit

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None
    NUMBA_AVAILABLE = False

USE_NUMBA = NUMBA_AVAILABLE and not _DISABLED


# --- numpy reference path -------------------------------------------------

def token_scores_numpy(base, dep, G):
    s = np.array(base, dtype=np.float64, copy=True)
    for d in range(dep.shape[1]):
        act = dep[:, d] >= 0
        s[act] += G[d][dep[act, d]]
    return s


def pair_moments_numpy(dep_d, y, sigma, J):
    """Counts, softmax sums and curvature of the pairs of one dependency."""
    use = (dep_d >= 0) & (y >= 0)
    a = dep_d[use]
    sig = sigma[use]
    counts = np.zeros((J, J))
    np.add.at(counts, (a, y[use]), 1.0)
    sigsum = np.zeros((J, J))
    np.add.at(sigsum, a, sig)
    curv = np.zeros((J, J, J))
    outer = sig[:, :, None] * sig[:, None, :]
    np.add.at(curv, a, -outer)
    for aa in range(J):
        curv[aa][np.diag_indices(J)] += sigsum[aa]
    return counts, sigsum, curv


def rns_iterate_numpy(u, G, offsets, tol, max_iter):
    L, J = u.shape
    table = _softmax(u)
    it = 0
    converged = False
    while it < max_iter:
        it += 1
        s = u.copy()
        for d, off in enumerate(offsets):
            lo, hi = max(0, -off), min(L, L - off)
            if lo < hi:
                s[lo:hi] += table[lo + off:hi + off] @ G[d]
        new = _softmax(s)
        delta = np.max(np.abs(new - table))
        table = new
        if delta < tol:
            converged = True
            break
    return table, it, converged


def viterbi_numpy(u, E):
    L, J = u.shape
    score = u[0].copy()
    back = np.zeros((L, J), dtype=np.int64)
    for l in range(1, L):
        cand = score[:, None] + E
        back[l] = np.argmax(cand, axis=0)
        score = cand[back[l], np.arange(J)] + u[l]
    path = np.empty(L, dtype=np.int64)
    path[-1] = int(np.argmax(score))
    for l in range(L - 1, 0, -1):
        path[l - 1] = back[l, path[l]]
    return path


def _softmax(s):
    z = s - s.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


# --- numba path -----------------------------------------------------------

if NUMBA_AVAILABLE:

    @njit(cache=True)
    def token_scores_numba(base, dep, G):
        NL, J = base.shape
        R = dep.shape[1]
        s = base.copy()
        for t in range(NL):
            for d in range(R):
                a = dep[t, d]
                if a >= 0:
                    for q in range(J):
                        s[t, q] += G[d, a, q]
        return s

    @njit(cache=True)
    def pair_moments_numba(dep_d, y, sigma, J):
        counts = np.zeros((J, J))
        sigsum = np.zeros((J, J))
        curv = np.zeros((J, J, J))
        for t in range(dep_d.shape[0]):
            a = dep_d[t]
            if a < 0 or y[t] < 0:
                continue
            counts[a, y[t]] += 1.0
            for b in range(J):
                sb = sigma[t, b]
                sigsum[a, b] += sb
                curv[a, b, b] += sb
                for c in range(J):
                    curv[a, b, c] -= sb * sigma[t, c]
        return counts, sigsum, curv

    @njit(cache=True)
    def _softmax_row(s, out):
        J = s.shape[0]
        mx = s[0]
        for q in range(1, J):
            if s[q] > mx:
                mx = s[q]
        tot = 0.0
        for q in range(J):
            out[q] = np.exp(s[q] - mx)
            tot += out[q]
        for q in range(J):
            out[q] /= tot

    @njit(cache=True)
    def rns_iterate_numba(u, G, offsets, tol, max_iter):
        L, J = u.shape
        R = offsets.shape[0]
        table = np.empty((L, J))
        for l in range(L):
            _softmax_row(u[l], table[l])
        new = np.empty((L, J))
        s = np.empty(J)
        it = 0
        converged = False
        while it < max_iter:
            it += 1
            for l in range(L):
                for q in range(J):
                    s[q] = u[l, q]
                for d in range(R):
                    k = l + offsets[d]
                    if k < 0 or k >= L:
                        continue
                    for a in range(J):
                        p = table[k, a]
                        for q in range(J):
                            s[q] += p * G[d, a, q]
                _softmax_row(s, new[l])
            delta = 0.0
            for l in range(L):
                for q in range(J):
                    diff = abs(new[l, q] - table[l, q])
                    if diff > delta:
                        delta = diff
                    table[l, q] = new[l, q]
            if delta < tol:
                converged = True
                break
        return table, it, converged

    @njit(cache=True)
    def viterbi_numba(u, E):
        L, J = u.shape
        score = u[0].copy()
        nxt = np.empty(J)
        back = np.zeros((L, J), dtype=np.int64)
        for l in range(1, L):
            for b in range(J):
                best = score[0] + E[0, b]
                arg = 0
                for a in range(1, J):
                    v = score[a] + E[a, b]
                    if v > best:
                        best = v
                        arg = a
                back[l, b] = arg
                nxt[b] = best + u[l, b]
            for b in range(J):
                score[b] = nxt[b]
        path = np.empty(L, dtype=np.int64)
        best = score[0]
        arg = 0
        for b in range(1, J):
            if score[b] > best:
                best = score[b]
                arg = b
        path[L - 1] = arg
        for l in range(L - 1, 0, -1):
            path[l - 1] = back[l, path[l]]
        return path

else:  # pragma: no cover
    token_scores_numba = token_scores_numpy
    pair_moments_numba = pair_moments_numpy
    rns_iterate_numba = rns_iterate_numpy
    viterbi_numba = viterbi_numpy


# --- dispatch -------------------------------------------------------------

def token_scores(base, dep, G):
    """Per-token label scores: ``base`` plus the active pair contributions."""
    base = np.ascontiguousarray(base, dtype=np.float64)
    dep = np.ascontiguousarray(dep, dtype=np.int64)
    G = np.ascontiguousarray(G, dtype=np.float64)
    if USE_NUMBA:
        return token_scores_numba(base, dep, G)
    return token_scores_numpy(base, dep, G)


def pair_moments(dep_d, y, sigma, J):
    dep_d = np.ascontiguousarray(dep_d, dtype=np.int64)
    y = np.ascontiguousarray(y, dtype=np.int64)
    sigma = np.ascontiguousarray(sigma, dtype=np.float64)
    if USE_NUMBA:
        return pair_moments_numba(dep_d, y, sigma, int(J))
    return pair_moments_numpy(dep_d, y, sigma, int(J))


def rns_iterate(u, G, offsets, tol, max_iter):
    u = np.ascontiguousarray(u, dtype=np.float64)
    G = np.ascontiguousarray(G, dtype=np.float64).reshape(len(offsets), u.shape[1], u.shape[1])
    offsets = np.asarray(offsets, dtype=np.int64)
    if USE_NUMBA:
        return rns_iterate_numba(u, G, offsets, float(tol), int(max_iter))
    return rns_iterate_numpy(u, G, offsets, float(tol), int(max_iter))


def viterbi(u, E):
    u = np.ascontiguousarray(u, dtype=np.float64)
    E = np.ascontiguousarray(E, dtype=np.float64)
    if USE_NUMBA:
        return viterbi_numba(u, E)
    return viterbi_numpy(u, E)
