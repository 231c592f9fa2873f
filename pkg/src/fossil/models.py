"""Model wrapper, scorer dispatch, and the versioned binary model file.

Every trained model (Fossil and each baseline) is persisted in the same
envelope: a magic string, a format version, a model-kind tag, the shape
header (user/item counts, latent dimension, chain order, alpha), the
parameter arrays as little-endian float64, and the user/item identifier
tables.  Loading reproduces scores bit-exactly.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from . import baselines as bl
from . import core
from .core import FossilParams, Hyper, UserContext
from .data import DataError

MAGIC = b"FOSSILMD"
FORMAT_VERSION = 1

KINDS = ("pop", "bprmf", "fism", "fmc", "fpmc", "fossil")
TRAINABLE_KINDS = ("bprmf", "fism", "fmc", "fpmc", "fossil")
_KIND_CODE = {k: i + 1 for i, k in enumerate(KINDS)}
_CODE_KIND = {v: k for k, v in _KIND_CODE.items()}

AnyParams = Union[bl.PopParams, bl.MFParams, bl.FMCParams, bl.FPMCParams, FossilParams]

# Scorer: (user, history item set, recents most-recent-first) -> per-item scores.
Scorer = Callable[[int, np.ndarray, np.ndarray], np.ndarray]


@dataclass
class Model:
    kind: str
    hyper: Hyper
    params: AnyParams
    user_ids: list[str]
    item_ids: list[str]

    @property
    def n_items(self) -> int:
        return len(self.item_ids)

    @property
    def n_users(self) -> int:
        return len(self.user_ids)

    def copy_params(self) -> AnyParams:
        return self.params.copy()


def init_model(kind: str, hyper: Hyper, user_ids, item_ids, seed: int,
               tie_fpmc: bool = False) -> Model:
    n_users, n_items = len(user_ids), len(item_ids)
    if kind in ("fossil", "fism"):
        params = core.init_fossil_params(hyper, n_users, n_items, seed)
    elif kind == "bprmf":
        params = bl.init_mf_params(hyper, n_users, n_items, seed)
    elif kind == "fmc":
        params = bl.init_fmc_params(hyper, n_items, seed)
    elif kind == "fpmc":
        params = bl.init_fpmc_params(hyper, n_users, n_items, seed, tie_mn=tie_fpmc)
    elif kind == "pop":
        params = bl.PopParams(np.zeros(n_items, dtype=np.int64))
    else:
        raise ValueError(f"unknown model kind {kind!r}")
    return Model(kind, hyper, params, list(user_ids), list(item_ids))


def make_scorer(model: Model) -> Scorer:
    """Vector scorer over all items for one user context."""
    p = model.params
    kind = model.kind
    if kind == "pop":
        counts = p.counts.astype(np.float64)

        def scorer(u, hist, recents):
            return counts.copy()

    elif kind == "bprmf":

        def scorer(u, hist, recents):
            return p.Y @ p.X[u]

    elif kind == "fmc":

        def scorer(u, hist, recents):
            if len(recents) == 0:
                raise DataError("chain scorer needs at least one preceding action")
            return p.N @ p.M[recents[0]]

    elif kind == "fpmc":

        def scorer(u, hist, recents):
            if len(recents) == 0:
                raise DataError("chain scorer needs at least one preceding action")
            return p.Y @ p.X[u] + p.N @ p.M[recents[0]]

    elif kind in ("fism", "fossil"):
        hyper = model.hyper

        def scorer(u, hist, recents):
            return core.score_all(p, hyper, u, UserContext(u, hist, recents))

    else:
        raise ValueError(f"unknown model kind {kind!r}")
    return scorer


def score_one(model: Model, u: int, hist: np.ndarray, recents: np.ndarray, j: int) -> float:
    """Single-item score, bypassing the shared-sum shortcut."""
    p = model.params
    if model.kind == "pop":
        return bl.score_pop(p, j)
    if model.kind == "bprmf":
        return bl.score_bprmf(p, u, j)
    if model.kind == "fmc":
        return bl.score_fmc(p, int(recents[0]), j)
    if model.kind == "fpmc":
        return bl.score_fpmc(p, u, int(recents[0]), j)
    return core.score(p, model.hyper, u, UserContext(u, hist, recents), j)


# ---------------------------------------------------------------------------
# Binary envelope
# ---------------------------------------------------------------------------

_HEADER = struct.Struct("<8sIBIIIId")  # magic, version, kind, |U|, |I|, k, order, alpha


def _write_arr(fh, arr: np.ndarray, dtype):
    fh.write(np.ascontiguousarray(arr, dtype=dtype).tobytes())


def _read_arr(fh, shape, dtype) -> np.ndarray:
    n = int(np.prod(shape)) if shape else 0
    raw = fh.read(n * np.dtype(dtype).itemsize)
    if len(raw) != n * np.dtype(dtype).itemsize:
        raise DataError("model file truncated")
    return np.frombuffer(raw, dtype=dtype).reshape(shape).copy()


def _write_ids(fh, ids):
    blob = "\n".join(ids).encode("utf-8")
    fh.write(struct.pack("<Q", len(blob)))
    fh.write(blob)


def _read_ids(fh, count):
    (nbytes,) = struct.unpack("<Q", fh.read(8))
    blob = fh.read(nbytes).decode("utf-8")
    ids = blob.split("\n") if blob else []
    if len(ids) != count:
        raise DataError(f"model file lists {len(ids)} ids, header says {count}")
    return ids


def save_model(model: Model, path):
    h = model.hyper
    n_users, n_items = model.n_users, model.n_items
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, _KIND_CODE[model.kind],
                              n_users, n_items, h.k, h.order, h.alpha))
        p = model.params
        if model.kind == "pop":
            _write_arr(fh, p.counts, "<i8")
        elif model.kind == "bprmf":
            _write_arr(fh, p.X, "<f8")
            _write_arr(fh, p.Y, "<f8")
        elif model.kind == "fmc":
            _write_arr(fh, p.M, "<f8")
            _write_arr(fh, p.N, "<f8")
        elif model.kind == "fpmc":
            for a in (p.X, p.Y, p.M, p.N):
                _write_arr(fh, a, "<f8")
        else:
            _write_arr(fh, p.beta, "<f8")
            _write_arr(fh, p.P, "<f8")
            _write_arr(fh, p.Q, "<f8")
            _write_arr(fh, p.eta, "<f8")
            _write_arr(fh, p.eta_user, "<f8")
        _write_ids(fh, model.user_ids)
        _write_ids(fh, model.item_ids)


def load_model(path, expect_kind: str | None = None) -> Model:
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) != _HEADER.size:
            raise DataError("model file truncated")
        magic, version, code, n_users, n_items, k, order, alpha = _HEADER.unpack(head)
        if magic != MAGIC:
            raise DataError("not a model file (bad magic)")
        if version != FORMAT_VERSION:
            raise DataError(f"unsupported model format version {version}")
        kind = _CODE_KIND.get(code)
        if kind is None:
            raise DataError(f"unknown model kind code {code}")
        if expect_kind is not None and kind != expect_kind:
            raise DataError(f"model file holds a {kind} model, expected {expect_kind}")
        hyper = Hyper(k=k, order=order, alpha=alpha)
        if kind == "pop":
            params = bl.PopParams(_read_arr(fh, (n_items,), "<i8"))
        elif kind == "bprmf":
            params = bl.MFParams(_read_arr(fh, (n_users, k), "<f8"),
                                 _read_arr(fh, (n_items, k), "<f8"))
        elif kind == "fmc":
            params = bl.FMCParams(_read_arr(fh, (n_items, k), "<f8"),
                                  _read_arr(fh, (n_items, k), "<f8"))
        elif kind == "fpmc":
            X = _read_arr(fh, (n_users, k), "<f8")
            Y = _read_arr(fh, (n_items, k), "<f8")
            M = _read_arr(fh, (n_items, k), "<f8")
            N = _read_arr(fh, (n_items, k), "<f8")
            params = bl.FPMCParams(X, Y, M, N)
        else:
            params = FossilParams(
                beta=_read_arr(fh, (n_items,), "<f8"),
                P=_read_arr(fh, (n_items, k), "<f8"),
                Q=_read_arr(fh, (n_items, k), "<f8"),
                eta=_read_arr(fh, (order,), "<f8"),
                eta_user=_read_arr(fh, (n_users, order), "<f8"),
            )
        user_ids = _read_ids(fh, n_users)
        item_ids = _read_ids(fh, n_items)
    return Model(kind, hyper, params, user_ids, item_ids)
