"""Pairwise-ranking SGD shared by every trainable model kind.

One training step samples a (user, step, negative) triple, nudges the
parameters along the gradient of ln sigmoid(score_pos - score_neg), and
applies weight decay to exactly the coordinates the gradient touched.  An
epoch draws sum_u (T_u - 1) triples, one expected visit per predictable
train position.  Validation AUC is checked periodically; the best snapshot
is kept and training stops early when it stops improving.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as kern
from . import baselines as bl
from . import models as mdl
from .core import SAMPLER_STREAM, Hyper
from .data import DataError, SequenceDataset
from .rng import RNG_NAME, Pcg32, pcg32_init


class NumericError(Exception):
    """Training produced non-finite parameter values."""


@dataclass
class TrainConfig:
    epsilon: float = 0.01
    lam: float = 0.1
    k: int = 10
    order: int = 1
    alpha: float = 0.2
    max_epochs: int = 200
    eval_every: int = 2
    patience: int = 10
    seed: int = 1
    tie_fpmc: bool = False
    # optional per-parameter-group decay, e.g. {"beta": 0.0}
    lambda_overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.epsilon <= 0 or self.lam < 0:
            raise ValueError("need epsilon > 0 and lam >= 0")
        if self.max_epochs < 1 or self.patience < 1 or self.eval_every < 1:
            raise ValueError("max_epochs, patience and eval_every must be >= 1")

    def lam_for(self, group: str) -> float:
        return float(self.lambda_overrides.get(group, self.lam))

    def hyper(self, kind: str) -> Hyper:
        # chain baselines are first-order by construction
        order = self.order if kind in ("fossil", "fism") else 1
        return Hyper(k=self.k, order=order, alpha=self.alpha)


@dataclass(frozen=True)
class Triple:
    """One sampled update: user u, 1-based train step t (>= 2), negative j."""

    u: int
    t: int
    j: int


@dataclass
class TrainArrays:
    """Flat views of a split dataset as consumed by the jitted kernels."""

    n_users: int
    n_items: int
    seq_flat: np.ndarray
    seq_ptr: np.ndarray
    train_len: np.ndarray
    tset_flat: np.ndarray   # per-user sorted distinct train items
    tset_ptr: np.ndarray
    elig: np.ndarray        # users with at least 2 train positions

    @property
    def triples_per_epoch(self) -> int:
        return int(np.maximum(self.train_len - 1, 0).sum())


def build_arrays(ds: SequenceDataset) -> TrainArrays:
    if not ds.split:
        raise DataError("training needs a split dataset")
    ds.validate()
    seq_ptr = np.zeros(ds.n_users + 1, dtype=np.int64)
    for u, seq in enumerate(ds.sequences):
        seq_ptr[u + 1] = seq_ptr[u] + len(seq)
    seq_flat = np.concatenate(ds.sequences).astype(np.int64)
    train_len = np.array([len(s) - 2 for s in ds.sequences], dtype=np.int64)
    tsets = [np.unique(seq[:-2]) for seq in ds.sequences]
    tset_ptr = np.zeros(ds.n_users + 1, dtype=np.int64)
    for u, t in enumerate(tsets):
        tset_ptr[u + 1] = tset_ptr[u] + len(t)
    tset_flat = np.concatenate(tsets).astype(np.int64)
    elig = np.flatnonzero(train_len >= 2).astype(np.int64)
    return TrainArrays(ds.n_users, ds.n_items, seq_flat, seq_ptr,
                       train_len, tset_flat, tset_ptr, elig)


def _check_samplable(arrays: TrainArrays, kind: str, order: int):
    if arrays.elig.size == 0:
        raise DataError("no user has two or more train positions")
    if kind in ("fossil", "fmc", "fpmc"):
        window = order if kind == "fossil" else 1
        if arrays.n_items <= window + 1:
            raise DataError(
                f"{arrays.n_items} items cannot cover an exclusion window of {window + 1}"
            )
    else:
        sizes = np.diff(arrays.tset_ptr)
        full = np.flatnonzero(sizes >= arrays.n_items)
        if full.size:
            raise DataError(
                f"user index {full[0]} has consumed every item; no negatives exist"
            )


def sample_triple(arrays: TrainArrays, kind: str, order: int, rng: Pcg32) -> Triple:
    """One (u, t, j) draw with the exclusion rule of the given model kind."""
    _check_samplable(arrays, kind, order)
    exclude_itemset = kind in ("bprmf", "fism")
    window = order if kind == "fossil" else 1
    u, p, j = kern.sample_triple(rng.state, arrays.seq_flat, arrays.seq_ptr,
                                 arrays.train_len, arrays.tset_flat, arrays.tset_ptr,
                                 arrays.elig, arrays.n_items, window, exclude_itemset)
    if p < 0:
        raise DataError("could not sample an admissible negative item")
    return Triple(int(u), int(p) + 1, int(j))


def sbpr_gradient(model: mdl.Model, arrays: TrainArrays, triple: Triple) -> dict:
    """Sparse gradient of ln sigmoid(score_pos - score_neg) at the triple.

    Maps parameter-group name to (index, value) pairs suitable for numpy
    fancy indexing; indices within a group are unique so decay is applied
    once per touched coordinate.  FISM deltas omit the frozen weights.
    """
    u, p, j = triple.u, triple.t - 1, triple.j
    par = model.params
    kind = model.kind
    if kind in ("fossil", "fism"):
        g, x, d, dqg, dqj, dP, deta, ks = kern.fossil_triple_delta(
            par.beta, par.P, par.Q, par.eta, par.eta_user,
            model.hyper.alpha, model.hyper.order,
            arrays.seq_flat, arrays.seq_ptr, arrays.tset_flat, arrays.tset_ptr,
            u, p, j)
        lo, hi = arrays.tset_ptr[u], arrays.tset_ptr[u + 1]
        rows = arrays.tset_flat[lo:hi]
        delta = {
            "beta": (np.array([g, j]), np.array([d, -d])),
            "Q": (np.array([g, j]), np.stack([dqg, dqj])),
            "P": (rows, dP),
        }
        if kind == "fossil":
            kidx = np.arange(ks)
            delta["eta"] = (kidx, deta)
            delta["eta_user"] = ((np.full(ks, u), kidx), deta.copy())
        return delta
    if kind == "bprmf":
        g, x, d, dx, dyg, dyj = kern.bprmf_triple_delta(
            par.X, par.Y, arrays.seq_flat, arrays.seq_ptr, u, p, j)
        return {
            "X": (np.array([u]), dx[None, :]),
            "Y": (np.array([g, j]), np.stack([dyg, dyj])),
        }
    if kind == "fmc":
        g, prev, x, d, dm, dng, dnj = kern.fmc_triple_delta(
            par.M, par.N, arrays.seq_flat, arrays.seq_ptr, u, p, j)
        return {
            "M": (np.array([prev]), dm[None, :]),
            "N": (np.array([g, j]), np.stack([dng, dnj])),
        }
    if kind == "fpmc":
        g, prev, x, d, dx, dyg, dyj, dm, dng, dnj = kern.fpmc_triple_delta(
            par.X, par.Y, par.M, par.N, arrays.seq_flat, arrays.seq_ptr, u, p, j)
        delta = {
            "X": (np.array([u]), dx[None, :]),
            "Y": (np.array([g, j]), np.stack([dyg, dyj])),
        }
        if par.M is par.N:
            # tied transition matrix: merge the M and N contributions per row
            if prev == g:
                delta["M"] = (np.array([g, j]), np.stack([dm + dng, dnj]))
            else:
                delta["M"] = (np.array([prev, g, j]), np.stack([dm, dng, dnj]))
        else:
            delta["M"] = (np.array([prev]), dm[None, :])
            delta["N"] = (np.array([g, j]), np.stack([dng, dnj]))
        return delta
    raise ValueError(f"model kind {kind!r} has no gradient")


def apply_update(params, delta: dict, config: TrainConfig):
    """theta += eps * (delta - lambda * theta) on the touched coordinates."""
    eps = config.epsilon
    for group, (idx, val) in delta.items():
        arr = getattr(params, group)
        lam = config.lam_for(group)
        arr[idx] += eps * (val - lam * arr[idx])
        if not np.all(np.isfinite(arr[idx])):
            raise NumericError(f"non-finite values in parameter group {group!r}")
    return params


@dataclass(frozen=True)
class TraceRow:
    epoch: int
    val_auc: float
    seconds: float
    triples: int


@dataclass
class TrainResult:
    model: mdl.Model
    trace: list[TraceRow]
    best_epoch: int
    best_val_auc: float
    rng_name: str = RNG_NAME

    def trace_text(self) -> str:
        lines = [f"# rng={self.rng_name} kind={self.model.kind} best_epoch={self.best_epoch}"]
        lines.append("epoch\tval_auc\tseconds\ttriples")
        for r in self.trace:
            lines.append(f"{r.epoch}\t{r.val_auc:.6f}\t{r.seconds:.3f}\t{r.triples}")
        return "\n".join(lines) + "\n"


def fit_pop(ds: SequenceDataset, config: TrainConfig | None = None) -> mdl.Model:
    """Popularity model: counts over the training positions."""
    if not ds.split:
        raise DataError("popularity counting needs a split dataset")
    counts = bl.count_train_items(ds.sequences, ds.n_items)
    hyper = Hyper(k=1, order=1, alpha=0.0)
    return mdl.Model("pop", hyper, bl.PopParams(counts), list(ds.user_ids), list(ds.item_ids))


def _check_finite(model: mdl.Model):
    p = model.params
    for group in vars(p):
        arr = getattr(p, group)
        if not np.all(np.isfinite(arr)):
            raise NumericError(f"non-finite values in parameter group {group!r}")


def _run_epoch(model: mdl.Model, arrays: TrainArrays, config: TrainConfig,
               state, n_triples: int) -> int:
    p = model.params
    a = arrays
    eps = config.epsilon
    if model.kind in ("fossil", "fism"):
        return kern.fossil_epoch(
            state, n_triples, p.beta, p.P, p.Q, p.eta, p.eta_user,
            model.hyper.alpha, model.hyper.order,
            a.seq_flat, a.seq_ptr, a.train_len, a.tset_flat, a.tset_ptr,
            a.elig, a.n_items, eps,
            config.lam_for("beta"), config.lam_for("P"), config.lam_for("Q"),
            config.lam_for("eta"), config.lam_for("eta_user"),
            model.kind == "fossil", model.kind == "fism")
    if model.kind == "bprmf":
        return kern.bprmf_epoch(
            state, n_triples, p.X, p.Y,
            a.seq_flat, a.seq_ptr, a.train_len, a.tset_flat, a.tset_ptr,
            a.elig, a.n_items, eps, config.lam_for("X"), config.lam_for("Y"))
    if model.kind == "fmc":
        return kern.fmc_epoch(
            state, n_triples, p.M, p.N,
            a.seq_flat, a.seq_ptr, a.train_len, a.tset_flat, a.tset_ptr,
            a.elig, a.n_items, eps, config.lam_for("M"), config.lam_for("N"))
    if model.kind == "fpmc":
        return kern.fpmc_epoch(
            state, n_triples, p.X, p.Y, p.M, p.N,
            a.seq_flat, a.seq_ptr, a.train_len, a.tset_flat, a.tset_ptr,
            a.elig, a.n_items, eps,
            config.lam_for("X"), config.lam_for("Y"),
            config.lam_for("M"), config.lam_for("N"), p.M is p.N)
    raise ValueError(f"model kind {model.kind!r} is not SGD-trainable")


def train(ds: SequenceDataset, kind: str, config: TrainConfig) -> TrainResult:
    """Fit one model with early stopping on validation AUC.

    The run is a pure function of (dataset, kind, config): the sampler and
    the initializer derive their streams from config.seed.
    """
    from .evaluation import EvalFrame, auc_frame  # local import, avoids a cycle

    if kind not in mdl.TRAINABLE_KINDS:
        raise ValueError(f"cannot SGD-train model kind {kind!r}")
    arrays = build_arrays(ds)
    _check_samplable(arrays, kind, config.order)
    hyper = config.hyper(kind)
    model = mdl.init_model(kind, hyper, ds.user_ids, ds.item_ids, config.seed,
                           tie_fpmc=config.tie_fpmc)
    n_triples = arrays.triples_per_epoch
    state = pcg32_init(config.seed, SAMPLER_STREAM)
    frame = EvalFrame.build(ds, "validation")
    scorer = mdl.make_scorer(model)

    trace: list[TraceRow] = []
    best_params = model.copy_params()
    best_auc = -np.inf
    best_epoch = 0
    evals_since_best = 0
    consumed = 0
    t0 = time.perf_counter()
    for epoch in range(1, config.max_epochs + 1):
        status = _run_epoch(model, arrays, config, state, n_triples)
        if status != 0:
            raise DataError("could not sample an admissible negative item")
        consumed += n_triples
        last = epoch == config.max_epochs
        if epoch % config.eval_every == 0 or last:
            _check_finite(model)
            val_auc, _, _ = auc_frame(scorer, frame)
            trace.append(TraceRow(epoch, val_auc, time.perf_counter() - t0, consumed))
            if val_auc > best_auc:
                best_auc = val_auc
                best_epoch = epoch
                best_params = model.copy_params()
                evals_since_best = 0
            else:
                evals_since_best += 1
                if evals_since_best >= config.patience:
                    break
    model.params = best_params
    return TrainResult(model, trace, best_epoch, float(best_auc))
