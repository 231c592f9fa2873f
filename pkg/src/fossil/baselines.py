"""Comparison scorers trained under the same pairwise-ranking procedure.

POP ranks by training popularity; BPR-MF is plain user-item matrix
factorization; FISM is the similarity-only special case of the Fossil
predictor (weights frozen at zero, shared code path); FMC factorizes the
first-order item-to-item transition matrix; FPMC sums the BPR-MF and FMC
terms.  None of the factorized baselines carries an item bias: their
predictors are pure inner products.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import INIT_SCALE, INIT_STREAM, Hyper
from .rng import Pcg32


@dataclass
class PopParams:
    counts: np.ndarray  # (n_items,) training occurrences

    @property
    def n_items(self) -> int:
        return self.counts.shape[0]

    def copy(self) -> "PopParams":
        return PopParams(self.counts.copy())


@dataclass
class MFParams:
    X: np.ndarray  # (n_users, k)
    Y: np.ndarray  # (n_items, k)

    @property
    def n_items(self) -> int:
        return self.Y.shape[0]

    def copy(self) -> "MFParams":
        return MFParams(self.X.copy(), self.Y.copy())


@dataclass
class FMCParams:
    M: np.ndarray  # (n_items, k) outgoing side
    N: np.ndarray  # (n_items, k) incoming side

    @property
    def n_items(self) -> int:
        return self.M.shape[0]

    def copy(self) -> "FMCParams":
        return FMCParams(self.M.copy(), self.N.copy())


@dataclass
class FPMCParams:
    X: np.ndarray
    Y: np.ndarray
    M: np.ndarray
    N: np.ndarray

    @property
    def n_items(self) -> int:
        return self.Y.shape[0]

    def copy(self) -> "FPMCParams":
        M = self.M.copy()
        N = M if self.N is self.M else self.N.copy()  # keep a tied pair tied
        return FPMCParams(self.X.copy(), self.Y.copy(), M, N)


def count_train_items(sequences, n_items: int) -> np.ndarray:
    """Occurrences of each item over the training positions (last two held out)."""
    counts = np.zeros(n_items, dtype=np.int64)
    for seq in sequences:
        train = seq[:-2]
        np.add.at(counts, train, 1)
    return counts


def init_mf_params(hyper: Hyper, n_users: int, n_items: int, seed: int) -> MFParams:
    rng = Pcg32(seed, INIT_STREAM)
    X = rng.uniform_array(n_users * hyper.k, -INIT_SCALE, INIT_SCALE).reshape(n_users, hyper.k)
    Y = rng.uniform_array(n_items * hyper.k, -INIT_SCALE, INIT_SCALE).reshape(n_items, hyper.k)
    return MFParams(X, Y)


def init_fmc_params(hyper: Hyper, n_items: int, seed: int) -> FMCParams:
    rng = Pcg32(seed, INIT_STREAM)
    M = rng.uniform_array(n_items * hyper.k, -INIT_SCALE, INIT_SCALE).reshape(n_items, hyper.k)
    N = rng.uniform_array(n_items * hyper.k, -INIT_SCALE, INIT_SCALE).reshape(n_items, hyper.k)
    return FMCParams(M, N)


def init_fpmc_params(hyper: Hyper, n_users: int, n_items: int, seed: int,
                     tie_mn: bool = False) -> FPMCParams:
    rng = Pcg32(seed, INIT_STREAM)
    k = hyper.k
    X = rng.uniform_array(n_users * k, -INIT_SCALE, INIT_SCALE).reshape(n_users, k)
    Y = rng.uniform_array(n_items * k, -INIT_SCALE, INIT_SCALE).reshape(n_items, k)
    M = rng.uniform_array(n_items * k, -INIT_SCALE, INIT_SCALE).reshape(n_items, k)
    if tie_mn:
        N = M  # shared storage: transitions use <M_i, M_j>
    else:
        N = rng.uniform_array(n_items * k, -INIT_SCALE, INIT_SCALE).reshape(n_items, k)
    return FPMCParams(X, Y, M, N)


def score_pop(params: PopParams, j: int) -> float:
    return float(params.counts[j])


def score_bprmf(params: MFParams, u: int, j: int) -> float:
    return float(params.X[u] @ params.Y[j])


def score_fmc(params: FMCParams, i_prev: int, j: int) -> float:
    return float(params.M[i_prev] @ params.N[j])


def score_fpmc(params: FPMCParams, u: int, i_prev: int, j: int) -> float:
    return float(params.X[u] @ params.Y[j] + params.M[i_prev] @ params.N[j])


def score_fism(params, hyper: Hyper, user: int, ctx, j: int) -> float:
    """Similarity-only score: the Fossil predictor with zero chain weights.

    FISM models are FossilParams whose eta vectors stay at zero for their
    whole life, so this is the shared scoring path, not a reimplementation.
    """
    from .core import score

    return score(params, hyper, user, ctx, j)
