"""Synthetic datasets with known structure, used as recoverability oracles."""

from __future__ import annotations

import numpy as np

from .data import SequenceDataset
from .rng import Pcg32

SYNTH_STREAM = 3


def make_cycle_dataset(n_users: int = 500, n_items: int = 50, seq_len: int = 20,
                       follow_prob: float = 0.9, seed: int = 0) -> SequenceDataset:
    """Noisy walks on a planted cycle 0 -> 1 -> ... -> n_items-1 -> 0.

    Each step follows the cycle edge with probability ``follow_prob`` and
    jumps to a uniformly random item otherwise, so a first-order chain is
    highly predictive while per-user preferences carry little signal.
    """
    rng = Pcg32(seed, SYNTH_STREAM)
    sequences = []
    for _ in range(n_users):
        seq = np.empty(seq_len, dtype=np.int64)
        seq[0] = rng.randint(n_items)
        for t in range(1, seq_len):
            if rng.uniform() < follow_prob:
                seq[t] = (seq[t - 1] + 1) % n_items
            else:
                seq[t] = rng.randint(n_items)
        sequences.append(seq)
    user_ids = [f"u{i:04d}" for i in range(n_users)]
    item_ids = [f"i{i:04d}" for i in range(n_items)]
    return SequenceDataset(user_ids, item_ids, sequences)


def make_lag2_cycle_dataset(n_users: int = 300, n_items: int = 30, seq_len: int = 14,
                            follow_prob: float = 0.92, seed: int = 9) -> SequenceDataset:
    """Walks where the next item is determined by the item two steps back.

    The immediate predecessor carries no information, so first-order chains
    score at chance while a second-order model can recover the rule.
    """
    rng = Pcg32(seed, SYNTH_STREAM)
    sequences = []
    for _ in range(n_users):
        seq = np.empty(seq_len, dtype=np.int64)
        seq[0] = rng.randint(n_items)
        seq[1] = rng.randint(n_items)
        for t in range(2, seq_len):
            if rng.uniform() < follow_prob:
                seq[t] = (seq[t - 2] + 1) % n_items
            else:
                seq[t] = rng.randint(n_items)
        sequences.append(seq)
    user_ids = [f"u{i:04d}" for i in range(n_users)]
    item_ids = [f"i{i:04d}" for i in range(n_items)]
    return SequenceDataset(user_ids, item_ids, sequences)


def make_random_dataset(n_users: int, n_items: int, min_len: int = 3,
                        max_len: int = 10, seed: int = 0) -> SequenceDataset:
    """Uniform random sequences; no structure, handy as an evaluation fixture."""
    rng = Pcg32(seed, SYNTH_STREAM)
    sequences = []
    for _ in range(n_users):
        length = min_len + rng.randint(max_len - min_len + 1)
        sequences.append(np.array([rng.randint(n_items) for _ in range(length)],
                                  dtype=np.int64))
    user_ids = [f"u{i:04d}" for i in range(n_users)]
    item_ids = [f"i{i:04d}" for i in range(n_items)]
    return SequenceDataset(user_ids, item_ids, sequences)
