import numpy as np
import pytest

from fossil.core import FossilParams
from fossil.data import SequenceDataset, split_leave_last
from fossil.synth import make_cycle_dataset, make_random_dataset


def zero_params(n_users, n_items, k, order):
    return FossilParams(beta=np.zeros(n_items), P=np.zeros((n_items, k)),
                        Q=np.zeros((n_items, k)), eta=np.zeros(order),
                        eta_user=np.zeros((n_users, order)))


def random_params(n_users, n_items, k, order, seed, scale=0.5):
    rng = np.random.default_rng(seed)
    return FossilParams(beta=rng.uniform(-scale, scale, n_items),
                        P=rng.uniform(-scale, scale, (n_items, k)),
                        Q=rng.uniform(-scale, scale, (n_items, k)),
                        eta=rng.uniform(-scale, scale, order),
                        eta_user=rng.uniform(-scale, scale, (n_users, order)))


@pytest.fixture(scope="session")
def tiny_split():
    """Nine users, twelve items, random sequences of length 4..9, split."""
    return split_leave_last(make_random_dataset(9, 12, 4, 9, seed=11))


@pytest.fixture(scope="session")
def cycle_split():
    """Noisy planted-cycle data, large enough to learn from."""
    return split_leave_last(make_cycle_dataset(n_users=300, n_items=30,
                                               seq_len=15, follow_prob=0.9, seed=5))


def make_handmade_dataset():
    """Fixed tiny dataset with hand-checkable sequences."""
    sequences = [
        np.array([0, 1, 2, 3, 4], dtype=np.int64),
        np.array([2, 2, 3, 0, 1], dtype=np.int64),
        np.array([4, 0, 4, 1, 3], dtype=np.int64),
    ]
    return SequenceDataset([f"u{i}" for i in range(3)],
                           [f"i{i}" for i in range(5)], sequences)


@pytest.fixture()
def handmade():
    return make_handmade_dataset()


# ---------------------------------------------------------------------------
# independent objective + finite differences for gradient checks
# ---------------------------------------------------------------------------

def log_sigmoid(x):
    if x >= 0:
        return -np.log1p(np.exp(-x))
    return x - np.log1p(np.exp(x))


def triple_objective(model, ds, tri):
    """ln sigmoid(score_pos - score_neg), via the scoring API (not kernels)."""
    from fossil.baselines import score_bprmf, score_fmc, score_fpmc
    from fossil.core import UserContext, score

    u, p, j = tri.u, tri.t - 1, tri.j
    seq = ds.sequences[u]
    g = int(seq[p])
    par = model.params
    if model.kind in ("fossil", "fism"):
        ctx = UserContext(u, np.unique(seq[:-2]), seq[:p][::-1])
        x = score(par, model.hyper, u, ctx, g) - score(par, model.hyper, u, ctx, j)
    elif model.kind == "bprmf":
        x = score_bprmf(par, u, g) - score_bprmf(par, u, j)
    elif model.kind == "fmc":
        prev = int(seq[p - 1])
        x = score_fmc(par, prev, g) - score_fmc(par, prev, j)
    else:
        prev = int(seq[p - 1])
        x = score_fpmc(par, u, prev, g) - score_fpmc(par, u, prev, j)
    return log_sigmoid(x)


def iter_delta_coords(delta):
    """Yield (group, coordinate tuple, analytic value) over a sparse delta."""
    for group, (idx, val) in delta.items():
        val = np.asarray(val)
        if isinstance(idx, tuple):
            for n, coord in enumerate(zip(*idx)):
                yield group, tuple(int(c) for c in coord), float(val[n])
        else:
            for n, row in enumerate(np.atleast_1d(idx)):
                v = val[n]
                if np.ndim(v) == 0:
                    yield group, (int(row),), float(v)
                else:
                    for c in range(v.shape[0]):
                        yield group, (int(row), c), float(v[c])


def gradient_fd_maxerr(model, ds, tri, delta, h=1e-5, tiny=1e-7):
    """Max relative error of the sparse delta vs central finite differences."""
    worst = 0.0
    for group, coord, analytic in iter_delta_coords(delta):
        arr = getattr(model.params, group)
        orig = arr[coord]
        arr[coord] = orig + h
        fplus = triple_objective(model, ds, tri)
        arr[coord] = orig - h
        fminus = triple_objective(model, ds, tri)
        arr[coord] = orig
        fd = (fplus - fminus) / (2 * h)
        if abs(analytic) < tiny and abs(fd) < tiny:
            continue
        worst = max(worst, abs(analytic - fd) / max(abs(analytic), abs(fd)))
    return worst
