"""Jitted hot loops: triple sampling, per-triple gradients, epoch updates.

Each model kind has a pure ``*_triple_delta`` function returning the
gradient of  x = score(positive) - score(negative)  scaled by the logistic
slope sigma(-x), and an ``*_epoch`` driver that samples triples, calls that
same delta function, and applies  theta += eps * (delta - lambda * theta)
to exactly the touched coordinates.  Keeping one delta implementation per
kind means the finite-difference tests exercise the code that training runs.

All randomness comes from an explicit pcg32 state array, so a seed fixes
the whole run bit-for-bit.  Epoch drivers return 0 on success and -1 when
negative sampling cannot find an admissible item.
"""

import numpy as np
from numba import njit

from .rng import pcg32_randint

_MAX_NEG_ATTEMPTS = 100000


@njit(cache=True)
def sigmoid(x):
    """Overflow-safe logistic function, good for |x| well beyond 1e3."""
    if x >= 0.0:
        return 1.0 / (1.0 + np.exp(-x))
    e = np.exp(x)
    return e / (1.0 + e)


@njit(cache=True)
def _find_sorted(arr, lo, hi, x):
    """Index of x in arr[lo:hi] (sorted ascending) or -1."""
    while lo < hi:
        mid = (lo + hi) // 2
        v = arr[mid]
        if v == x:
            return mid
        if v < x:
            lo = mid + 1
        else:
            hi = mid
    return -1


@njit(cache=True)
def sample_triple(state, seq_flat, seq_ptr, train_len, tset_flat, tset_ptr,
                  elig, n_items, window, exclude_itemset):
    """Draw (user, position, negative) for one update.

    The user is uniform over the eligible set, the position uniform over the
    user's train steps 2..T_u (0-based 1..T_u-1), and the negative uniform
    over items outside the exclusion set: the previous ``window`` actions
    plus the positive itself for chain-aware models, or the whole train
    itemset when ``exclude_itemset`` is set.  Returns position -1 and
    negative -1 if no admissible negative is found.
    """
    u = elig[pcg32_randint(state, elig.shape[0])]
    tl = train_len[u]
    p = 1 + pcg32_randint(state, tl - 1)
    base = seq_ptr[u]
    attempts = 0
    while True:
        j = pcg32_randint(state, n_items)
        ok = True
        if exclude_itemset:
            if _find_sorted(tset_flat, tset_ptr[u], tset_ptr[u + 1], j) >= 0:
                ok = False
        else:
            if j == seq_flat[base + p]:
                ok = False
            else:
                kmax = min(window, p)
                for k in range(1, kmax + 1):
                    if j == seq_flat[base + p - k]:
                        ok = False
                        break
        if ok:
            return u, p, j
        attempts += 1
        if attempts >= _MAX_NEG_ATTEMPTS:
            return u, np.int64(-1), np.int64(-1)


# ---------------------------------------------------------------------------
# Fossil / FISM
# ---------------------------------------------------------------------------

@njit(cache=True)
def fossil_triple_delta(beta, P, Q, eta, eta_user, alpha, order,
                        seq_flat, seq_ptr, tset_flat, tset_ptr, u, p, j):
    """Gradient pieces for one (u, p, j) triple of the fused predictor.

    Returns (g, x, d, dqg, dqj, dP, deta, ks) where d = sigmoid(-x), dP is
    aligned with the user's sorted train itemset, and deta holds the shared
    gradient of the global and per-user weights for the ks available lags.
    """
    base = seq_ptr[u]
    g = seq_flat[base + p]
    lo, hi = tset_ptr[u], tset_ptr[u + 1]
    n = hi - lo
    K = P.shape[1]

    pooled = np.zeros(K)
    for ii in range(lo, hi):
        pooled += P[tset_flat[ii]]

    ks = min(order, p)
    short = np.zeros(K)
    for k in range(1, ks + 1):
        r = seq_flat[base + p - k]
        w = eta[k - 1] + eta_user[u, k - 1]
        short += w * P[r]

    # positive side: pool excludes g (g is always a train item)
    inv_g = np.float64(n - 1) ** (-alpha) if n > 1 else 0.0
    vg = (pooled - P[g]) * inv_g + short
    # negative side: pool excludes j only if j happens to be a train item
    j_in = _find_sorted(tset_flat, lo, hi, j) >= 0
    if j_in:
        inv_j = np.float64(n - 1) ** (-alpha) if n > 1 else 0.0
        vj = (pooled - P[j]) * inv_j + short
    else:
        inv_j = np.float64(n) ** (-alpha) if n > 0 else 0.0
        vj = pooled * inv_j + short

    x = beta[g] - beta[j] + np.dot(vg, Q[g]) - np.dot(vj, Q[j])
    d = sigmoid(-x)

    dqg = d * vg
    dqj = -d * vj

    dP = np.zeros((n, K))
    cg = d * inv_g
    cj = d * inv_j
    for ii in range(n):
        i = tset_flat[lo + ii]
        for c in range(K):
            val = 0.0
            if i != g:
                val += cg * Q[g, c]
            if i != j:
                val -= cj * Q[j, c]
            dP[ii, c] = val

    qdiff = Q[g] - Q[j]
    deta = np.zeros(ks)
    for k in range(1, ks + 1):
        r = seq_flat[base + p - k]
        w = eta[k - 1] + eta_user[u, k - 1]
        rpos = _find_sorted(tset_flat, lo, hi, r) - lo
        for c in range(K):
            dP[rpos, c] += d * w * qdiff[c]
        deta[k - 1] = d * np.dot(P[r], qdiff)

    return g, x, d, dqg, dqj, dP, deta, ks


@njit(cache=True)
def fossil_epoch(state, n_triples, beta, P, Q, eta, eta_user, alpha, order,
                 seq_flat, seq_ptr, train_len, tset_flat, tset_ptr, elig, n_items,
                 eps, lam_beta, lam_P, lam_Q, lam_eta, lam_eta_user,
                 update_weights, exclude_itemset):
    K = P.shape[1]
    window = order
    for _ in range(n_triples):
        u, p, j = sample_triple(state, seq_flat, seq_ptr, train_len,
                                tset_flat, tset_ptr, elig, n_items,
                                window, exclude_itemset)
        if p < 0:
            return -1
        g, x, d, dqg, dqj, dP, deta, ks = fossil_triple_delta(
            beta, P, Q, eta, eta_user, alpha, order,
            seq_flat, seq_ptr, tset_flat, tset_ptr, u, p, j)

        beta[g] += eps * (d - lam_beta * beta[g])
        beta[j] += eps * (-d - lam_beta * beta[j])
        for c in range(K):
            Q[g, c] += eps * (dqg[c] - lam_Q * Q[g, c])
            Q[j, c] += eps * (dqj[c] - lam_Q * Q[j, c])
        lo = tset_ptr[u]
        n = tset_ptr[u + 1] - lo
        for ii in range(n):
            i = tset_flat[lo + ii]
            for c in range(K):
                P[i, c] += eps * (dP[ii, c] - lam_P * P[i, c])
        if update_weights:
            for k in range(ks):
                eta[k] += eps * (deta[k] - lam_eta * eta[k])
                eta_user[u, k] += eps * (deta[k] - lam_eta_user * eta_user[u, k])
    return 0


# ---------------------------------------------------------------------------
# BPR-MF
# ---------------------------------------------------------------------------

@njit(cache=True)
def bprmf_triple_delta(X, Y, seq_flat, seq_ptr, u, p, j):
    g = seq_flat[seq_ptr[u] + p]
    x = np.dot(X[u], Y[g]) - np.dot(X[u], Y[j])
    d = sigmoid(-x)
    dx = d * (Y[g] - Y[j])
    dyg = d * X[u]
    dyj = -d * X[u]
    return g, x, d, dx, dyg, dyj


@njit(cache=True)
def bprmf_epoch(state, n_triples, X, Y,
                seq_flat, seq_ptr, train_len, tset_flat, tset_ptr, elig, n_items,
                eps, lam_X, lam_Y):
    K = X.shape[1]
    for _ in range(n_triples):
        u, p, j = sample_triple(state, seq_flat, seq_ptr, train_len,
                                tset_flat, tset_ptr, elig, n_items, 0, True)
        if p < 0:
            return -1
        g, x, d, dx, dyg, dyj = bprmf_triple_delta(X, Y, seq_flat, seq_ptr, u, p, j)
        for c in range(K):
            X[u, c] += eps * (dx[c] - lam_X * X[u, c])
            Y[g, c] += eps * (dyg[c] - lam_Y * Y[g, c])
            Y[j, c] += eps * (dyj[c] - lam_Y * Y[j, c])
    return 0


# ---------------------------------------------------------------------------
# FMC
# ---------------------------------------------------------------------------

@njit(cache=True)
def fmc_triple_delta(M, N, seq_flat, seq_ptr, u, p, j):
    base = seq_ptr[u]
    g = seq_flat[base + p]
    prev = seq_flat[base + p - 1]
    x = np.dot(M[prev], N[g]) - np.dot(M[prev], N[j])
    d = sigmoid(-x)
    dm = d * (N[g] - N[j])
    dng = d * M[prev]
    dnj = -d * M[prev]
    return g, prev, x, d, dm, dng, dnj


@njit(cache=True)
def fmc_epoch(state, n_triples, M, N,
              seq_flat, seq_ptr, train_len, tset_flat, tset_ptr, elig, n_items,
              eps, lam_M, lam_N):
    K = M.shape[1]
    for _ in range(n_triples):
        u, p, j = sample_triple(state, seq_flat, seq_ptr, train_len,
                                tset_flat, tset_ptr, elig, n_items, 1, False)
        if p < 0:
            return -1
        g, prev, x, d, dm, dng, dnj = fmc_triple_delta(M, N, seq_flat, seq_ptr, u, p, j)
        for c in range(K):
            M[prev, c] += eps * (dm[c] - lam_M * M[prev, c])
            N[g, c] += eps * (dng[c] - lam_N * N[g, c])
            N[j, c] += eps * (dnj[c] - lam_N * N[j, c])
    return 0


# ---------------------------------------------------------------------------
# FPMC
# ---------------------------------------------------------------------------

@njit(cache=True)
def fpmc_triple_delta(X, Y, M, N, seq_flat, seq_ptr, u, p, j):
    base = seq_ptr[u]
    g = seq_flat[base + p]
    prev = seq_flat[base + p - 1]
    x = (np.dot(X[u], Y[g]) - np.dot(X[u], Y[j])
         + np.dot(M[prev], N[g]) - np.dot(M[prev], N[j]))
    d = sigmoid(-x)
    dx = d * (Y[g] - Y[j])
    dyg = d * X[u]
    dyj = -d * X[u]
    dm = d * (N[g] - N[j])
    dng = d * M[prev]
    dnj = -d * M[prev]
    return g, prev, x, d, dx, dyg, dyj, dm, dng, dnj


@njit(cache=True)
def fpmc_epoch(state, n_triples, X, Y, M, N,
               seq_flat, seq_ptr, train_len, tset_flat, tset_ptr, elig, n_items,
               eps, lam_X, lam_Y, lam_M, lam_N, tied):
    K = X.shape[1]
    for _ in range(n_triples):
        u, p, j = sample_triple(state, seq_flat, seq_ptr, train_len,
                                tset_flat, tset_ptr, elig, n_items, 1, False)
        if p < 0:
            return -1
        g, prev, x, d, dx, dyg, dyj, dm, dng, dnj = fpmc_triple_delta(
            X, Y, M, N, seq_flat, seq_ptr, u, p, j)
        for c in range(K):
            X[u, c] += eps * (dx[c] - lam_X * X[u, c])
            Y[g, c] += eps * (dyg[c] - lam_Y * Y[g, c])
            Y[j, c] += eps * (dyj[c] - lam_Y * Y[j, c])
        if tied:
            # M and N are one matrix: accumulate per distinct row, decay once
            if prev == g:
                for c in range(K):
                    M[g, c] += eps * (dm[c] + dng[c] - lam_M * M[g, c])
                for c in range(K):
                    M[j, c] += eps * (dnj[c] - lam_M * M[j, c])
            else:
                for c in range(K):
                    M[prev, c] += eps * (dm[c] - lam_M * M[prev, c])
                    M[g, c] += eps * (dng[c] - lam_M * M[g, c])
                    M[j, c] += eps * (dnj[c] - lam_M * M[j, c])
        else:
            for c in range(K):
                M[prev, c] += eps * (dm[c] - lam_M * M[prev, c])
                N[g, c] += eps * (dng[c] - lam_N * N[g, c])
                N[j, c] += eps * (dnj[c] - lam_N * N[j, c])
    return 0
