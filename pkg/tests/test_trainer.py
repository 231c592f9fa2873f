import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from conftest import gradient_fd_maxerr, log_sigmoid, triple_objective
from fossil.core import Hyper, UserContext, score
from fossil.data import DataError, SequenceDataset, split_leave_last
from fossil.models import init_model
from fossil.rng import Pcg32
from fossil.synth import make_cycle_dataset, make_random_dataset
from fossil.training import (NumericError, TrainConfig, Triple, apply_update,
                             build_arrays, sample_triple, sbpr_gradient, train)


def randomized_model(kind, ds, seed, k=4, order=2, scale=0.5):
    hyper = Hyper(k=k, order=order if kind in ("fossil", "fism") else 1, alpha=0.2)
    model = init_model(kind, hyper, ds.user_ids, ds.item_ids, seed=seed)
    rng = np.random.default_rng(seed)
    for group, arr in vars(model.params).items():
        arr[...] = rng.uniform(-scale, scale, arr.shape)
    return model


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------

def test_singleton_time_support():
    ds = split_leave_last(make_random_dataset(4, 8, 4, 4, seed=0))  # train len 2
    arrays = build_arrays(ds)
    rng = Pcg32(1)
    for _ in range(50):
        assert sample_triple(arrays, "fossil", 1, rng).t == 2


def test_user_frequencies_uniform(tiny_split):
    arrays = build_arrays(tiny_split)
    rng = Pcg32(2)
    draws = np.array([sample_triple(arrays, "fossil", 1, rng).u for _ in range(100000)])
    counts = np.bincount(draws, minlength=tiny_split.n_users)
    _, p = stats.chisquare(counts)
    assert p > 0.01


def test_window_exclusion_and_time_lower_bound(tiny_split):
    arrays = build_arrays(tiny_split)
    order = 2
    rng = Pcg32(3)
    for _ in range(100000):
        tri = sample_triple(arrays, "fossil", order, rng)
        assert tri.t >= 2
        seq = tiny_split.sequences[tri.u]
        p = tri.t - 1
        assert p <= tiny_split.train_len(tri.u) - 1
        window = {int(seq[p])} | {int(seq[p - k]) for k in range(1, min(order, p) + 1)}
        assert tri.j not in window


def test_itemset_exclusion_for_similarity_kinds(tiny_split):
    arrays = build_arrays(tiny_split)
    rng = Pcg32(4)
    held_out_hits = 0
    for _ in range(20000):
        tri = sample_triple(arrays, "fism", 1, rng)
        seq = tiny_split.sequences[tri.u]
        tset = set(np.unique(seq[:-2]).tolist())
        assert tri.j not in tset
        if tri.j in (int(seq[-1]), int(seq[-2])):
            held_out_hits += 1
    # held-out items are legitimate negatives during training
    assert held_out_hits > 0


def test_unsamplable_dataset_errors():
    seqs = [np.array([0, 1, 0, 1, 0], dtype=np.int64) for _ in range(3)]
    ds = split_leave_last(SequenceDataset(["u0", "u1", "u2"], ["a", "b"], seqs))
    arrays = build_arrays(ds)
    with pytest.raises(DataError):
        sample_triple(arrays, "fossil", 2, Pcg32(0))


# ---------------------------------------------------------------------------
# gradients
# ---------------------------------------------------------------------------

def test_gradient_at_identical_scores(tiny_split):
    # all-zero parameters give x = 0, so the slope is sigma(0) = 1/2 and the
    # bias deltas are the raw partials (+-1) halved
    arrays = build_arrays(tiny_split)
    model = randomized_model("fossil", tiny_split, seed=0, scale=0.0)
    tri = sample_triple(arrays, "fossil", model.hyper.order, Pcg32(5))
    delta = sbpr_gradient(model, arrays, tri)
    g = int(tiny_split.sequences[tri.u][tri.t - 1])
    bidx, bval = delta["beta"]
    assert bidx.tolist() == [g, tri.j]
    assert bval.tolist() == [0.5, -0.5]


@pytest.mark.parametrize("kind", ["fossil", "fism", "bprmf", "fmc", "fpmc"])
def test_gradient_matches_finite_differences(kind, tiny_split):
    arrays = build_arrays(tiny_split)
    rng = Pcg32(6)
    for trial in range(10):
        model = randomized_model(kind, tiny_split, seed=trial)
        tri = sample_triple(arrays, kind, model.hyper.order, rng)
        delta = sbpr_gradient(model, arrays, tri)
        assert gradient_fd_maxerr(model, tiny_split, tri, delta) < 1e-4


def test_fossil_gradient_reduces_to_fism(tiny_split):
    """With zero weights, the beta/P/Q deltas equal a from-scratch
    similarity-only gradient."""
    arrays = build_arrays(tiny_split)
    model = randomized_model("fossil", tiny_split, seed=8)
    model.params.eta[:] = 0.0
    model.params.eta_user[:] = 0.0
    par, hyper = model.params, model.hyper

    rng = Pcg32(9)
    tri = sample_triple(arrays, "fism", 1, rng)  # valid under both exclusions
    u, p, j = tri.u, tri.t - 1, tri.j
    seq = tiny_split.sequences[u]
    g = int(seq[p])
    tset = np.unique(seq[:-2])

    def fism_score(t):
        hist = tset[tset != t]
        return par.beta[t] + (par.P[hist].sum(0) / len(hist) ** hyper.alpha) @ par.Q[t]

    d = 1.0 / (1.0 + np.exp(fism_score(g) - fism_score(j)))
    hg = tset[tset != g]
    vg = par.P[hg].sum(0) / len(hg) ** hyper.alpha
    vj = par.P[tset].sum(0) / len(tset) ** hyper.alpha  # j is outside the itemset
    want = {
        "beta": {g: d, j: -d},
        "Q": {g: d * vg, j: -d * vj},
        "P": {int(i): (d * par.Q[g] / len(hg) ** hyper.alpha if i != g else 0.0)
              - d * par.Q[j] / len(tset) ** hyper.alpha for i in tset},
    }

    delta = sbpr_gradient(model, arrays, tri)
    bidx, bval = delta["beta"]
    for i, v in zip(bidx, bval):
        assert v == pytest.approx(want["beta"][int(i)], rel=1e-12)
    qidx, qval = delta["Q"]
    for i, v in zip(qidx, qval):
        np.testing.assert_allclose(v, want["Q"][int(i)], rtol=1e-12)
    pidx, pval = delta["P"]
    for i, v in zip(pidx, pval):
        np.testing.assert_allclose(v, want["P"][int(i)], rtol=1e-12, atol=1e-15)


# ---------------------------------------------------------------------------
# apply_update
# ---------------------------------------------------------------------------

def test_apply_update_empty_delta_is_identity(tiny_split):
    model = randomized_model("fossil", tiny_split, seed=1)
    before = model.params.P.copy()
    apply_update(model.params, {}, TrainConfig(lam=0.0))
    apply_update(model.params, {}, TrainConfig(lam=5.0))
    assert np.array_equal(model.params.P, before)


def test_apply_update_single_coordinate_arithmetic(tiny_split):
    model = randomized_model("fossil", tiny_split, seed=2)
    model.params.beta[3] = 1.0
    d = 0.37
    cfg = TrainConfig(epsilon=0.01, lam=0.1)
    apply_update(model.params, {"beta": (np.array([3]), np.array([d]))}, cfg)
    assert model.params.beta[3] == pytest.approx(1.0 + 0.01 * (d - 0.1), rel=1e-15)


def test_apply_update_decays_only_touched(tiny_split):
    model = randomized_model("fossil", tiny_split, seed=3)
    before = model.params.beta.copy()
    cfg = TrainConfig(epsilon=0.1, lam=1.0)
    apply_update(model.params, {"beta": (np.array([0]), np.array([0.0]))}, cfg)
    assert model.params.beta[0] != before[0]
    assert np.array_equal(model.params.beta[1:], before[1:])


def test_apply_update_aborts_on_nonfinite(tiny_split):
    model = randomized_model("fossil", tiny_split, seed=4)
    cfg = TrainConfig()
    with pytest.raises(NumericError, match="beta"):
        apply_update(model.params, {"beta": (np.array([0]), np.array([np.inf]))}, cfg)


def test_per_group_lambda_override(tiny_split):
    cfg = TrainConfig(epsilon=0.5, lam=1.0, lambda_overrides={"beta": 0.0})
    model = randomized_model("fossil", tiny_split, seed=5)
    model.params.beta[2] = 0.8
    apply_update(model.params, {"beta": (np.array([2]), np.array([0.0]))}, cfg)
    assert model.params.beta[2] == 0.8  # no decay on the overridden group


# ---------------------------------------------------------------------------
# objective ascent
# ---------------------------------------------------------------------------

def full_objective(model, ds, triples, config):
    obj = sum(triple_objective(model, ds, t) for t in triples)
    for group, arr in vars(model.params).items():
        obj -= 0.5 * config.lam_for(group) * float((arr ** 2).sum())
    return obj


def test_sgd_ascends_frozen_sample(tiny_split):
    arrays = build_arrays(tiny_split)
    model = randomized_model("fossil", tiny_split, seed=7, scale=0.1)
    rng = Pcg32(11)
    triples = [sample_triple(arrays, "fossil", model.hyper.order, rng) for _ in range(40)]
    cfg = TrainConfig(epsilon=1e-3, lam=0.01, k=4, order=2)
    before = full_objective(model, tiny_split, triples, cfg)
    for step in range(100):
        tri = triples[step % len(triples)]
        apply_update(model.params, sbpr_gradient(model, arrays, tri), cfg)
    after = full_objective(model, tiny_split, triples, cfg)
    assert after >= before


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

def test_huge_lambda_collapses_to_chance(cycle_split):
    # eps * lam = 1 wipes the previous value of every touched coordinate, so
    # the model stays near zero and ranks at chance level even though this
    # dataset is trivially learnable at sane decay strengths
    cfg = TrainConfig(epsilon=0.01, lam=100.0, k=4, max_epochs=6,
                      eval_every=2, patience=10, seed=1)
    res = train(cycle_split, "fossil", cfg)
    assert abs(res.model.params.P).max() < 0.01
    assert 0.45 <= res.best_val_auc <= 0.55


def test_exploding_lambda_aborts(tiny_split):
    # eps * lam = 10 multiplies touched coordinates by -9 per step: divergence
    cfg = TrainConfig(epsilon=0.01, lam=1e3, k=4, max_epochs=50,
                      eval_every=2, seed=13)
    with pytest.raises(NumericError):
        train(tiny_split, "fossil", cfg)


def test_planted_deterministic_cycle_recovered():
    ds = split_leave_last(make_cycle_dataset(n_users=200, n_items=12, seq_len=6,
                                             follow_prob=1.0, seed=17))
    cfg = TrainConfig(k=10, order=1, max_epochs=60, eval_every=2, patience=10, seed=3)
    res = train(ds, "fossil", cfg)
    from fossil.evaluation import auc

    mean, _, _ = auc(res.model, ds, "test")
    assert mean > 0.95


def test_training_is_deterministic(tiny_split):
    cfg = TrainConfig(k=4, order=2, max_epochs=8, eval_every=2, seed=21)
    a = train(tiny_split, "fossil", cfg)
    b = train(tiny_split, "fossil", cfg)
    assert a.model.params.P.tobytes() == b.model.params.P.tobytes()
    assert a.model.params.eta_user.tobytes() == b.model.params.eta_user.tobytes()
    assert [(r.epoch, r.val_auc, r.triples) for r in a.trace] == \
           [(r.epoch, r.val_auc, r.triples) for r in b.trace]
    assert a.best_epoch == b.best_epoch


def test_trace_format(tiny_split):
    cfg = TrainConfig(k=3, max_epochs=4, eval_every=2, seed=1)
    res = train(tiny_split, "fossil", cfg)
    text = res.trace_text()
    lines = text.splitlines()
    assert lines[0].startswith("# rng=pcg32")
    assert lines[1] == "epoch\tval_auc\tseconds\ttriples"
    assert len(lines) == 2 + len(res.trace)


def test_fism_training_never_touches_weights(tiny_split):
    cfg = TrainConfig(k=4, order=2, max_epochs=6, eval_every=2, seed=2)
    res = train(tiny_split, "fism", cfg)
    assert not res.model.params.eta.any()
    assert not res.model.params.eta_user.any()


# ---------------------------------------------------------------------------
# tied FPMC and numeric safety
# ---------------------------------------------------------------------------

def test_tied_fpmc_gradient_matches_finite_differences(tiny_split):
    arrays = build_arrays(tiny_split)
    rng = Pcg32(31)
    cfg = TrainConfig(k=4, tie_fpmc=True)
    for trial in range(10):
        model = init_model("fpmc", cfg.hyper("fpmc"), tiny_split.user_ids,
                           tiny_split.item_ids, seed=trial, tie_fpmc=True)
        npr = np.random.default_rng(trial)
        model.params.X[...] = npr.uniform(-0.5, 0.5, model.params.X.shape)
        model.params.Y[...] = npr.uniform(-0.5, 0.5, model.params.Y.shape)
        model.params.M[...] = npr.uniform(-0.5, 0.5, model.params.M.shape)
        assert model.params.M is model.params.N
        tri = sample_triple(arrays, "fpmc", 1, rng)
        delta = sbpr_gradient(model, arrays, tri)
        assert "N" not in delta  # merged into the shared matrix
        assert gradient_fd_maxerr(model, tiny_split, tri, delta) < 1e-4


def test_tied_fpmc_training_keeps_matrices_shared(tiny_split):
    cfg = TrainConfig(k=3, max_epochs=4, eval_every=2, seed=2, tie_fpmc=True)
    res = train(tiny_split, "fpmc", cfg)
    assert res.model.params.M is res.model.params.N
    assert np.array_equal(res.model.params.M, res.model.params.N)


def test_sigmoid_overflow_safe():
    from fossil._kernels import sigmoid

    assert sigmoid(0.0) == 0.5
    assert sigmoid(1000.0) == 1.0
    assert sigmoid(-1000.0) == 0.0
    assert 0.0 < sigmoid(-30.0) < sigmoid(30.0) < 1.0
    assert np.isfinite(sigmoid(-1e6))


def test_grid_search_lambda(cycle_split):
    from fossil.evaluation import grid_search_lambda

    cfg = TrainConfig(k=4, max_epochs=6, eval_every=2, seed=3)
    best, scores = grid_search_lambda(cycle_split, "fmc", cfg, grid=(1.0, 0.1, 0.01))
    assert set(scores) == {1.0, 0.1, 0.01}
    assert scores[best] == max(scores.values())


def test_short_users_are_never_sampled_but_train_works():
    # users with a single train position get zero sampling weight
    seqs = [np.array([0, 1, 2], dtype=np.int64),           # train length 1
            np.array([3, 4, 5, 0, 1, 2], dtype=np.int64),
            np.array([2, 3, 0, 5, 4, 1], dtype=np.int64)]
    ds = split_leave_last(SequenceDataset(["short", "a", "b"],
                                          [f"i{i}" for i in range(6)], seqs))
    arrays = build_arrays(ds)
    assert arrays.elig.tolist() == [1, 2]
    assert arrays.triples_per_epoch == 3 + 3
    rng = Pcg32(1)
    for _ in range(500):
        assert sample_triple(arrays, "fossil", 1, rng).u != 0
    res = train(ds, "fossil", TrainConfig(k=3, max_epochs=4, eval_every=2, seed=1))
    assert len(res.trace) >= 1


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from(["fossil", "bprmf", "fism", "fmc", "fpmc"]),
       st.integers(1, 3))
def test_gradient_fd_property(seed, kind, order):
    ds = split_leave_last(make_random_dataset(5, 10, 3, 7, seed=seed % 997))
    arrays = build_arrays(ds)
    model = randomized_model(kind, ds, seed=seed, order=order)
    tri = sample_triple(arrays, kind, model.hyper.order, Pcg32(seed))
    delta = sbpr_gradient(model, arrays, tri)
    assert gradient_fd_maxerr(model, ds, tri, delta) < 1e-4


def test_second_order_structure_needs_second_order_chain():
    from fossil.evaluation import auc
    from fossil.synth import make_lag2_cycle_dataset

    ds = split_leave_last(make_lag2_cycle_dataset())
    aucs = {}
    for order in (1, 2):
        cfg = TrainConfig(k=10, order=order, lam=0.01, max_epochs=200,
                          eval_every=2, patience=15, seed=5)
        model = train(ds, "fossil", cfg).model
        aucs[order], _, _ = auc(model, ds, "test")
    fmc_cfg = TrainConfig(k=10, lam=0.01, max_epochs=200, eval_every=2,
                          patience=15, seed=5)
    fmc_auc, _, _ = auc(train(ds, "fmc", fmc_cfg).model, ds, "test")
    # the predecessor is uninformative: first-order chains sit at chance,
    # while the second lag recovers the planted rule
    assert fmc_auc < 0.6
    assert aucs[2] > 0.95
    assert aucs[2] - aucs[1] > 0.03


@pytest.mark.parametrize("kind", ["fossil", "fism", "bprmf", "fmc", "fpmc"])
def test_epoch_kernel_equals_python_replay(kind, tiny_split):
    """The jitted epoch and the documented gradient/update ops are the same
    computation: replaying the identical triple stream through sbpr_gradient
    and apply_update reproduces the kernel's parameters bit for bit."""
    from fossil import _kernels as kern
    from fossil.core import SAMPLER_STREAM
    from fossil.rng import pcg32_init
    from fossil.training import _run_epoch

    arrays = build_arrays(tiny_split)
    cfg = TrainConfig(epsilon=0.01, lam=0.1, k=4, order=2, seed=31)
    n_triples = 200

    kernel_model = init_model(kind, cfg.hyper(kind), tiny_split.user_ids,
                              tiny_split.item_ids, cfg.seed)
    state = pcg32_init(cfg.seed, SAMPLER_STREAM)
    assert _run_epoch(kernel_model, arrays, cfg, state, n_triples) == 0

    replay_model = init_model(kind, cfg.hyper(kind), tiny_split.user_ids,
                              tiny_split.item_ids, cfg.seed)
    state = pcg32_init(cfg.seed, SAMPLER_STREAM)
    exclude = kind in ("bprmf", "fism")
    window = cfg.hyper(kind).order if kind == "fossil" else 1
    for _ in range(n_triples):
        u, p, j = kern.sample_triple(state, arrays.seq_flat, arrays.seq_ptr,
                                     arrays.train_len, arrays.tset_flat,
                                     arrays.tset_ptr, arrays.elig,
                                     arrays.n_items, window, exclude)
        assert p >= 0
        delta = sbpr_gradient(replay_model, arrays, Triple(int(u), int(p) + 1, int(j)))
        apply_update(replay_model.params, delta, cfg)

    for group, arr in vars(kernel_model.params).items():
        other = getattr(replay_model.params, group)
        assert arr.tobytes() == other.tobytes(), f"group {group} diverged"
