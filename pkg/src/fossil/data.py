"""Interaction-log ingestion and sequence dataset construction.

The pipeline is: parse a delimited event log, drop rare items then inactive
users (five-action rule by default), collapse ratings to implicit feedback,
sort each user's events into an action sequence, and hold out the last two
actions per user (one for validation, one for testing).  Sparsified variants
keep only the N most recent actions per user and are built before splitting.
"""

from __future__ import annotations

import io
from collections import Counter
from dataclasses import dataclass, field, replace

import numpy as np


class DataError(Exception):
    """Malformed input data or an operation applied to an unfit dataset."""


@dataclass(frozen=True)
class Event:
    user: str
    item: str
    timestamp: int
    index: int  # position in the input stream, used to break timestamp ties


@dataclass
class EventLog:
    events: list[Event]
    provenance: str = ""

    def __len__(self) -> int:
        return len(self.events)


@dataclass(frozen=True)
class FileFormat:
    """Column layout of a delimited event-log file.

    ``columns`` names the fields in file order; it must contain "user",
    "item" and "timestamp", and may contain "rating" (parsed and discarded:
    all feedback is treated as a positive signal downstream).
    """

    delimiter: str = "\t"
    columns: tuple[str, ...] = ("user", "item", "timestamp")

    def __post_init__(self):
        required = {"user", "item", "timestamp"}
        missing = required - set(self.columns)
        if missing:
            raise ValueError(f"format is missing columns: {sorted(missing)}")
        extra = set(self.columns) - required - {"rating"}
        if extra:
            raise ValueError(f"format has unknown columns: {sorted(extra)}")


MOVIELENS_FORMAT = FileFormat(delimiter="::", columns=("user", "item", "rating", "timestamp"))


def load_events(source, fmt: FileFormat = FileFormat(), provenance: str = "") -> EventLog:
    """Parse a delimited text stream (or path) into an EventLog.

    Input order is preserved as each event's tie-breaking index.  A malformed
    row raises DataError naming the line; an empty stream yields an empty log.
    """
    if isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
        with open(source, "r", encoding="utf-8") as fh:
            return load_events(fh, fmt, provenance or str(source))
    if isinstance(source, (io.RawIOBase, io.BufferedIOBase)):
        source = io.TextIOWrapper(source, encoding="utf-8")

    ucol = fmt.columns.index("user")
    icol = fmt.columns.index("item")
    tcol = fmt.columns.index("timestamp")
    events = []
    for lineno, line in enumerate(source, start=1):
        line = line.rstrip("\n").rstrip("\r")
        if not line:
            continue
        parts = line.split(fmt.delimiter)
        if len(parts) != len(fmt.columns):
            raise DataError(
                f"line {lineno}: expected {len(fmt.columns)} fields, got {len(parts)}"
            )
        user, item = parts[ucol], parts[icol]
        if not user or not item:
            raise DataError(f"line {lineno}: empty user or item identifier")
        try:
            ts = int(parts[tcol])
        except ValueError:
            raise DataError(
                f"line {lineno}: timestamp {parts[tcol]!r} is not an integer"
            ) from None
        events.append(Event(user, item, ts, len(events)))
    return EventLog(events, provenance)


def densify(log: EventLog, min_count: int = 5) -> EventLog:
    """Drop events of rare items, then of users left with too few events.

    Both passes use ``min_count`` and are applied exactly once, in that
    order; the result is not iterated to a fixpoint.
    """
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    item_counts = Counter(e.item for e in log.events)
    kept = [e for e in log.events if item_counts[e.item] >= min_count]
    user_counts = Counter(e.user for e in kept)
    kept = [e for e in kept if user_counts[e.user] >= min_count]
    return EventLog(kept, log.provenance)


def filter_items(log: EventLog, min_count: int = 5) -> EventLog:
    """Item-frequency pass only: drop events of items with too few events.

    Useful when every user must be retained regardless of how many of their
    actions survive the item filter.
    """
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    item_counts = Counter(e.item for e in log.events)
    kept = [e for e in log.events if item_counts[e.item] >= min_count]
    return EventLog(kept, log.provenance)


@dataclass
class SequenceDataset:
    """Per-user action sequences over densely indexed users and items.

    ``sequences[u]`` is user u's item-index sequence in time order.  When
    ``split`` is set, the final position of each sequence is the test action,
    the one before it the validation action, and everything earlier is
    training data.
    """

    user_ids: list[str]
    item_ids: list[str]
    sequences: list[np.ndarray] = field(repr=False)
    split: bool = False

    @property
    def n_users(self) -> int:
        return len(self.user_ids)

    @property
    def n_items(self) -> int:
        return len(self.item_ids)

    @property
    def n_actions(self) -> int:
        return int(sum(len(s) for s in self.sequences))

    def itemset(self, u: int) -> np.ndarray:
        """Distinct items in user u's full sequence, sorted ascending."""
        return np.unique(self.sequences[u])

    def train_len(self, u: int) -> int:
        if not self.split:
            raise DataError("dataset has no train/validation/test split")
        return len(self.sequences[u]) - 2

    def unsplit(self) -> "SequenceDataset":
        """Same sequences with the role marks discarded."""
        return replace(self, split=False)

    def validate(self):
        for u, seq in enumerate(self.sequences):
            if len(seq) == 0:
                raise DataError(f"user {self.user_ids[u]} has an empty sequence")
            if seq.min() < 0 or seq.max() >= self.n_items:
                raise DataError(f"user {self.user_ids[u]} has an out-of-range item index")
            if self.split and len(seq) < 3:
                raise DataError(
                    f"user {self.user_ids[u]} has only {len(seq)} actions; "
                    "a split requires at least 3"
                )


@dataclass(frozen=True)
class DatasetSummary:
    n_users: int
    n_items: int
    n_actions: int

    @property
    def actions_per_user(self) -> float:
        return self.n_actions / self.n_users

    @property
    def actions_per_item(self) -> float:
        return self.n_actions / self.n_items


def build_sequences(log: EventLog) -> SequenceDataset:
    """Assign dense user/item indices and sort each user's events in time.

    Ties in timestamp are broken by input order.  Ratings, if any were in the
    source file, were already discarded at parse time: every event counts as
    a positive action.  Identifier tables are sorted lexicographically so the
    indexing is a pure function of the log's content.
    """
    if not log.events:
        raise DataError("cannot build sequences from an empty log")
    user_ids = sorted({e.user for e in log.events})
    item_ids = sorted({e.item for e in log.events})
    uidx = {s: i for i, s in enumerate(user_ids)}
    iidx = {s: i for i, s in enumerate(item_ids)}
    per_user: list[list[tuple[int, int, int]]] = [[] for _ in user_ids]
    for e in log.events:
        per_user[uidx[e.user]].append((e.timestamp, e.index, iidx[e.item]))
    sequences = []
    for rows in per_user:
        rows.sort()
        sequences.append(np.array([it for _, _, it in rows], dtype=np.int64))
    return SequenceDataset(user_ids, item_ids, sequences)


def split_leave_last(ds: SequenceDataset) -> SequenceDataset:
    """Mark each user's last action as test and the one before as validation."""
    if ds.split:
        raise DataError("dataset is already split")
    for u, seq in enumerate(ds.sequences):
        if len(seq) < 3:
            raise DataError(
                f"user {ds.user_ids[u]} has only {len(seq)} actions; "
                "need >= 3 to hold out validation and test (densify first)"
            )
    return replace(ds, split=True)


def truncate_recent(ds: SequenceDataset, n: int) -> SequenceDataset:
    """Keep only the n most recent actions of each user.

    Items that no longer occur anywhere are removed and item indices are
    re-densified.  Must be applied before splitting.
    """
    if n < 3:
        raise ValueError("truncation threshold must be >= 3")
    if ds.split:
        raise DataError("truncate before splitting, not after")
    truncated = [seq[-n:] if len(seq) > n else seq for seq in ds.sequences]
    seen = np.zeros(ds.n_items, dtype=bool)
    for seq in truncated:
        seen[seq] = True
    old_of_new = np.flatnonzero(seen)
    new_of_old = np.full(ds.n_items, -1, dtype=np.int64)
    new_of_old[old_of_new] = np.arange(len(old_of_new))
    item_ids = [ds.item_ids[i] for i in old_of_new]
    sequences = [new_of_old[seq] for seq in truncated]
    return SequenceDataset(list(ds.user_ids), item_ids, sequences)


def summarize(ds: SequenceDataset) -> DatasetSummary:
    return DatasetSummary(ds.n_users, ds.n_items, ds.n_actions)


# ---------------------------------------------------------------------------
# Canonical dataset file
# ---------------------------------------------------------------------------
#
# Line 1: "<n_users> <n_items> <n_actions> <split flag 0|1>"
# Line 2: the item identifier table, space-separated (empty line if no items)
# Then one line per user: the user id followed by space-separated tokens,
# "<item-index>:<role>" with role T/V/E when split, bare "<item-index>"
# otherwise.  Identifiers therefore must not contain whitespace.

_ROLE_TEST = "E"
_ROLE_VALIDATION = "V"
_ROLE_TRAIN = "T"


def _check_ids(ids, what: str):
    for s in ids:
        if not s or any(c.isspace() for c in s):
            raise DataError(f"{what} id {s!r} is empty or contains whitespace")


def dataset_to_text(ds: SequenceDataset) -> str:
    """Serialize to the canonical text form (bit-exact for equal datasets)."""
    _check_ids(ds.user_ids, "user")
    _check_ids(ds.item_ids, "item")
    if ds.split:
        ds.validate()
    lines = [f"{ds.n_users} {ds.n_items} {ds.n_actions} {1 if ds.split else 0}"]
    lines.append(" ".join(ds.item_ids))
    for u, seq in enumerate(ds.sequences):
        if ds.split:
            roles = [_ROLE_TRAIN] * (len(seq) - 2) + [_ROLE_VALIDATION, _ROLE_TEST]
            toks = [f"{it}:{r}" for it, r in zip(seq, roles)]
        else:
            toks = [str(it) for it in seq]
        lines.append(ds.user_ids[u] + " " + " ".join(toks))
    return "\n".join(lines) + "\n"


def dataset_from_text(text: str) -> SequenceDataset:
    lines = text.splitlines()
    if not lines:
        raise DataError("empty dataset file")
    head = lines[0].split()
    if len(head) != 4:
        raise DataError("malformed dataset header")
    try:
        n_users, n_items, n_actions, split_flag = (int(x) for x in head)
    except ValueError:
        raise DataError("malformed dataset header") from None
    if len(lines) < 2 + n_users:
        raise DataError("dataset file truncated")
    item_ids = lines[1].split()
    if len(item_ids) != n_items:
        raise DataError(f"expected {n_items} item ids, found {len(item_ids)}")
    split = bool(split_flag)
    user_ids, sequences = [], []
    for row in lines[2 : 2 + n_users]:
        parts = row.split()
        if not parts:
            raise DataError("empty user line in dataset file")
        user_ids.append(parts[0])
        toks = parts[1:]
        idxs = np.empty(len(toks), dtype=np.int64)
        for i, tok in enumerate(toks):
            val = tok.split(":")[0] if split else tok
            try:
                idxs[i] = int(val)
            except ValueError:
                raise DataError(f"bad sequence token {tok!r} for user {parts[0]}") from None
        if split:
            roles = [t.split(":")[1] for t in toks]
            expect = [_ROLE_TRAIN] * (len(toks) - 2) + [_ROLE_VALIDATION, _ROLE_TEST]
            if len(toks) < 3 or roles != expect:
                raise DataError(f"user {parts[0]}: role marks violate the leave-last-two layout")
        sequences.append(idxs)
    ds = SequenceDataset(user_ids, item_ids, sequences, split=split)
    if ds.n_actions != n_actions:
        raise DataError(f"header claims {n_actions} actions, file has {ds.n_actions}")
    ds.validate()
    return ds


def save_dataset(ds: SequenceDataset, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dataset_to_text(ds))


def load_dataset(path) -> SequenceDataset:
    with open(path, "r", encoding="utf-8") as fh:
        return dataset_from_text(fh.read())
