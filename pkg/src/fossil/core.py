"""Fossil predictor: factored item-similarity preferences fused with a
personalized high-order factorized Markov chain.

An item j is scored for user u at a given step as

    beta_j + < (1/|H|^alpha) * sum_{i in H} P_i
               + sum_{k=1..L} (eta_k + eta_user[u,k]) * P_{recent_k} , Q_j >

where H is the user's historical item set excluding j itself, and recent_k
is the k-th most recent item before the step being scored.  The same P/Q
pair encodes both the similarity pool and the chain transitions, so a single
model serves long- and short-term dynamics.  With all weights at zero the
predictor reduces to a factored item-similarity scorer (the FISM special
case used as a baseline).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rng import Pcg32

# Stream ids keep initialization draws disjoint from triple-sampling draws
# even when both are derived from the same user-facing seed.
INIT_STREAM = 1
SAMPLER_STREAM = 2

INIT_SCALE = 0.01


@dataclass(frozen=True)
class Hyper:
    """Latent dimension, Markov order, and set-size damping exponent."""

    k: int = 10
    order: int = 1
    alpha: float = 0.2

    def __post_init__(self):
        if self.k < 1 or self.order < 1:
            raise ValueError("k and order must be >= 1")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")


@dataclass
class FossilParams:
    beta: np.ndarray      # (n_items,)
    P: np.ndarray         # (n_items, k)
    Q: np.ndarray         # (n_items, k)
    eta: np.ndarray       # (order,)
    eta_user: np.ndarray  # (n_users, order)

    @property
    def n_items(self) -> int:
        return self.beta.shape[0]

    @property
    def n_users(self) -> int:
        return self.eta_user.shape[0]

    def copy(self) -> "FossilParams":
        return FossilParams(
            self.beta.copy(), self.P.copy(), self.Q.copy(),
            self.eta.copy(), self.eta_user.copy(),
        )


@dataclass
class UserContext:
    """What is known about a user at the step being scored.

    ``history`` is the set of distinct items consumed so far (the scored
    target is excluded at scoring time, not here); ``recents`` holds up to
    ``order`` item indices, most recent first.
    """

    user: int
    history: np.ndarray
    recents: np.ndarray


def init_fossil_params(hyper: Hyper, n_users: int, n_items: int, seed: int) -> FossilParams:
    """Uniform [-0.01, 0.01] factors, zero biases and weights.

    Zero weights start the model at pure item-similarity behavior; the
    chain contribution is learned from there.  P is drawn before Q.
    """
    if n_users < 1 or n_items < 1:
        raise ValueError("need at least one user and one item")
    rng = Pcg32(seed, INIT_STREAM)
    P = rng.uniform_array(n_items * hyper.k, -INIT_SCALE, INIT_SCALE).reshape(n_items, hyper.k)
    Q = rng.uniform_array(n_items * hyper.k, -INIT_SCALE, INIT_SCALE).reshape(n_items, hyper.k)
    return FossilParams(
        beta=np.zeros(n_items),
        P=P,
        Q=Q,
        eta=np.zeros(hyper.order),
        eta_user=np.zeros((n_users, hyper.order)),
    )


def compose_user_vector(params: FossilParams, hyper: Hyper, user: int,
                        ctx: UserContext, target: int) -> np.ndarray:
    """The latent vector scored against Q_target.

    The long-term term sums P over the history minus the target and damps by
    |H|^alpha; an empty pool contributes nothing.  The short-term term adds
    the weighted factors of up to ``order`` recent items; a shorter window
    simply has fewer terms.
    """
    v = np.zeros(hyper.k)
    hist = np.asarray(ctx.history, dtype=np.int64)
    hist = hist[hist != target]
    if hist.size:
        v += params.P[hist].sum(axis=0) / hist.size ** hyper.alpha
    recents = np.asarray(ctx.recents, dtype=np.int64)[: hyper.order]
    for k, item in enumerate(recents):
        v += (params.eta[k] + params.eta_user[user, k]) * params.P[item]
    return v


def score(params: FossilParams, hyper: Hyper, user: int, ctx: UserContext, j: int) -> float:
    return float(params.beta[j] + compose_user_vector(params, hyper, user, ctx, j) @ params.Q[j])


def score_all(params: FossilParams, hyper: Hyper, user: int, ctx: UserContext) -> np.ndarray:
    """Scores for every item, sharing the history factor sum across items.

    The pooled sum S = sum_{i in history} P_i is computed once; items inside
    the history subtract their own factor and renormalize, so each entry
    matches the per-item score up to float round-off.
    """
    hist = np.unique(np.asarray(ctx.history, dtype=np.int64))
    recents = np.asarray(ctx.recents, dtype=np.int64)[: hyper.order]
    w = params.eta[: recents.size] + params.eta_user[user, : recents.size]
    short = params.Q @ (w @ params.P[recents]) if recents.size else 0.0
    scores = params.beta + short
    n = hist.size
    if n > 0:
        pooled = params.P[hist].sum(axis=0)
        long_all = params.Q @ pooled
        scores = scores + long_all / n ** hyper.alpha
        # items in the history: drop their own factor from the pool
        own = np.einsum("ij,ij->i", params.P[hist], params.Q[hist])
        inside = (long_all[hist] - own) / (n - 1) ** hyper.alpha if n > 1 else 0.0
        scores[hist] = params.beta[hist] + (short[hist] if recents.size else 0.0) + inside
    return scores


def rank_transitions(params: FossilParams, query: int, k: int) -> np.ndarray:
    """Top-k items most likely to follow ``query``, by <P_query, Q_j>.

    The query itself is excluded; ties break by ascending item index.
    """
    n = params.n_items
    if k > n:
        raise ValueError(f"k={k} exceeds the item count {n}")
    s = params.Q @ params.P[query]
    s[query] = -np.inf
    order = np.lexsort((np.arange(n), -s))
    out = order[: min(k, n - 1)]
    return out.astype(np.int64)
