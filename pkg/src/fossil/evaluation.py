"""AUC evaluation, model-comparison reports, and the sparsity study.

Per-user AUC is the fraction of never-consumed items the held-out action
outranks, with ties counting against the model; the dataset score is the
unweighted mean over users.  The validation action is scored with the train
history; the test action additionally sees the validation action in its
context.  Negatives always exclude every item of the user's full sequence,
so held-out items never appear as negatives.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from . import models as mdl
from .data import DataError, DatasetSummary, SequenceDataset, dataset_to_text
from .data import split_leave_last, summarize, truncate_recent
from .training import TrainConfig, fit_pop, train

BASELINE_KINDS = ("pop", "bprmf", "fism", "fmc", "fpmc")


def dataset_checksum(ds: SequenceDataset) -> str:
    return hashlib.sha256(dataset_to_text(ds).encode("utf-8")).hexdigest()


@dataclass
class EvalFrame:
    """Per-user contexts for one evaluation target, built once and reused."""

    target: str
    users: np.ndarray            # users with at least one negative
    truth: np.ndarray            # held-out item per included user
    hists: list                  # sorted distinct items before the target
    recents: list                # reversed prefix views (most recent first)
    neg_masks: list              # boolean masks over items
    neg_counts: np.ndarray
    skipped: int

    @staticmethod
    def build(ds: SequenceDataset, target: str) -> "EvalFrame":
        if not ds.split:
            raise DataError("evaluation needs a split dataset")
        if target not in ("validation", "test"):
            raise ValueError("target must be 'validation' or 'test'")
        users, truth, hists, recents, masks, counts = [], [], [], [], [], []
        skipped = 0
        for u, seq in enumerate(ds.sequences):
            pos = len(seq) - 1 if target == "test" else len(seq) - 2
            mask = np.ones(ds.n_items, dtype=bool)
            mask[np.unique(seq)] = False
            n_neg = int(mask.sum())
            if n_neg == 0:
                skipped += 1
                continue
            users.append(u)
            truth.append(seq[pos])
            hists.append(np.unique(seq[:pos]))
            recents.append(seq[:pos][::-1])
            masks.append(mask)
            counts.append(n_neg)
        return EvalFrame(target, np.array(users, dtype=np.int64),
                         np.array(truth, dtype=np.int64), hists, recents,
                         masks, np.array(counts, dtype=np.int64), skipped)


def auc_frame(scorer: mdl.Scorer, frame: EvalFrame):
    """Mean AUC, per-user AUCs, and the count of users without negatives."""
    if frame.users.size == 0:
        raise DataError("no user has any negative item to rank against")
    per_user = np.empty(frame.users.size)
    for i, u in enumerate(frame.users):
        s = scorer(int(u), frame.hists[i], frame.recents[i])
        wins = np.count_nonzero(s[frame.truth[i]] > s[frame.neg_masks[i]])
        per_user[i] = wins / frame.neg_counts[i]
    return float(per_user.mean()), per_user, frame.skipped


def auc(scorer_or_model, ds: SequenceDataset, target: str = "test"):
    """AUC of a model or of a raw (user, history, recents) -> scores callable."""
    frame = EvalFrame.build(ds, target)
    scorer = (mdl.make_scorer(scorer_or_model)
              if isinstance(scorer_or_model, mdl.Model) else scorer_or_model)
    return auc_frame(scorer, frame)


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

def parse_kind_spec(spec: str):
    """'fossil:2' -> ('fossil', 2); plain kinds keep the configured order."""
    if ":" in spec:
        kind, order = spec.split(":", 1)
        return kind, int(order)
    return spec, None


@dataclass
class EvalReport:
    names: list[str]
    aucs: dict[str, float]
    per_user: dict[str, np.ndarray]
    skipped: dict[str, int]
    summary: DatasetSummary
    improvements: dict[str, float]
    seed: int
    checksum: str
    config: dict = field(default_factory=dict)

    def to_table(self) -> str:
        lines = [f"# seed={self.seed} dataset_sha256={self.checksum}"]
        if self.config:
            lines.append("# config=" + json.dumps(self.config, sort_keys=True))
        lines.append(
            f"# users={self.summary.n_users} items={self.summary.n_items} "
            f"actions={self.summary.n_actions}")
        lines.append("model\tauc\tusers_skipped")
        for name in self.names:
            lines.append(f"{name}\t{self.aucs[name]:.6f}\t{self.skipped[name]}")
        if self.improvements:
            lines.append("comparison\timprovement_pct")
            for key, val in self.improvements.items():
                lines.append(f"{key}\t{val:.2f}")
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        doc = {
            "seed": self.seed,
            "dataset_sha256": self.checksum,
            "config": self.config,
            "summary": {
                "users": self.summary.n_users,
                "items": self.summary.n_items,
                "actions": self.summary.n_actions,
                "actions_per_user": self.summary.actions_per_user,
                "actions_per_item": self.summary.actions_per_item,
            },
            "auc": {n: self.aucs[n] for n in self.names},
            "users_skipped": {n: self.skipped[n] for n in self.names},
            "improvements_pct": self.improvements,
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def improvement_pct(a: float, b: float) -> float:
    return (a - b) / b * 100.0


def _improvements(names, aucs) -> dict[str, float]:
    """The four comparison columns, computed from whichever models exist.

    'fossil' means the best fossil variant present, and 'best' the strongest
    non-fossil baseline, mirroring the usual comparison-table convention.
    """
    fossil_names = [n for n in names if parse_kind_spec(n)[0] == "fossil"]
    base_names = [n for n in names if parse_kind_spec(n)[0] in BASELINE_KINDS]
    out = {}
    fossil_best = max((aucs[n] for n in fossil_names), default=None)
    by_kind = {}
    for n in names:
        kind = parse_kind_spec(n)[0]
        by_kind.setdefault(kind, aucs[n])
    if "fpmc" in by_kind and "bprmf" in by_kind:
        out["fpmc_vs_bprmf"] = improvement_pct(by_kind["fpmc"], by_kind["bprmf"])
    if fossil_best is not None and "fism" in by_kind:
        out["fossil_vs_fism"] = improvement_pct(fossil_best, by_kind["fism"])
    if fossil_best is not None and "fpmc" in by_kind:
        out["fossil_vs_fpmc"] = improvement_pct(fossil_best, by_kind["fpmc"])
    if fossil_best is not None and base_names:
        best = max(aucs[n] for n in base_names)
        out["fossil_vs_best"] = improvement_pct(fossil_best, best)
    return out


def train_by_spec(ds: SequenceDataset, spec: str, config: TrainConfig) -> mdl.Model:
    kind, order = parse_kind_spec(spec)
    if kind == "pop":
        return fit_pop(ds, config)
    cfg = config if order is None else TrainConfig(**{**vars(config), "order": order})
    return train(ds, kind, cfg).model


def evaluate_models(ds: SequenceDataset, specs, config: TrainConfig,
                    trained: dict[str, mdl.Model] | None = None) -> EvalReport:
    """Train (or reuse) each requested model and report test AUC.

    ``specs`` is a list of kind names, with 'fossil:L' selecting a chain
    order; duplicates are rejected because names key the report.
    """
    names = list(specs)
    if len(set(names)) != len(names):
        raise ValueError("duplicate model names in the evaluation list")
    frame = EvalFrame.build(ds, "test")
    aucs, per_user, skipped = {}, {}, {}
    for name in names:
        model = (trained or {}).get(name)
        if model is None:
            model = train_by_spec(ds, name, config)
        mean, per_u, skip = auc_frame(mdl.make_scorer(model), frame)
        aucs[name] = mean
        per_user[name] = per_u
        skipped[name] = skip
    return EvalReport(names, aucs, per_user, skipped, summarize(ds),
                      _improvements(names, aucs), config.seed, dataset_checksum(ds),
                      config={"epsilon": config.epsilon, "lam": config.lam,
                              "k": config.k, "order": config.order,
                              "alpha": config.alpha, "max_epochs": config.max_epochs,
                              "eval_every": config.eval_every,
                              "patience": config.patience})


@dataclass
class SparsityStudyReport:
    thresholds: list[int]
    names: list[str]
    grid: np.ndarray                      # |thresholds| x |names| test AUC
    summaries: list[DatasetSummary]
    curves: dict[str, list[float]]        # improvement percentages per threshold
    reports: list[EvalReport]
    seed: int
    checksum: str                         # of the unsplit base dataset
    config: dict = field(default_factory=dict)

    def to_table(self) -> str:
        lines = [f"# seed={self.seed} base_dataset_sha256={self.checksum}"]
        if self.config:
            lines.append("# config=" + json.dumps(self.config, sort_keys=True))
        lines.append("threshold\tusers\titems\tactions\t" + "\t".join(self.names))
        for i, n in enumerate(self.thresholds):
            s = self.summaries[i]
            cells = "\t".join(f"{v:.6f}" for v in self.grid[i])
            lines.append(f"{n}\t{s.n_users}\t{s.n_items}\t{s.n_actions}\t{cells}")
        if self.curves:
            lines.append("curve\t" + "\t".join(str(n) for n in self.thresholds))
            for key, vals in self.curves.items():
                lines.append(key + "\t" + "\t".join(f"{v:.2f}" for v in vals))
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        doc = {
            "seed": self.seed,
            "base_dataset_sha256": self.checksum,
            "config": self.config,
            "thresholds": self.thresholds,
            "models": self.names,
            "auc_grid": self.grid.tolist(),
            "summaries": [
                {"users": s.n_users, "items": s.n_items, "actions": s.n_actions,
                 "actions_per_user": s.actions_per_user,
                 "actions_per_item": s.actions_per_item}
                for s in self.summaries
            ],
            "improvement_curves_pct": self.curves,
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def sparsity_study(base: SequenceDataset, thresholds, specs,
                   config: TrainConfig) -> SparsityStudyReport:
    """Truncate, split, train and evaluate every model at every threshold.

    The base dataset must be unsplit and already densified; users are kept
    as-is after truncation (no re-filtering), so the user set is identical
    across thresholds.
    """
    thresholds = [int(n) for n in thresholds]
    if any(n < 3 for n in thresholds):
        raise ValueError("thresholds must be >= 3")
    if any(a <= b for a, b in zip(thresholds, thresholds[1:])):
        raise ValueError("thresholds must be strictly descending")
    if base.split:
        raise DataError("the sparsity study takes an unsplit base dataset")
    names = list(specs)
    grid = np.zeros((len(thresholds), len(names)))
    summaries, reports = [], []
    for i, n in enumerate(thresholds):
        ds_n = split_leave_last(truncate_recent(base, n))
        report = evaluate_models(ds_n, names, config)
        reports.append(report)
        summaries.append(report.summary)
        grid[i] = [report.aucs[name] for name in names]
    curves: dict[str, list[float]] = {}
    keys = ("fpmc_vs_bprmf", "fossil_vs_fism", "fossil_vs_fpmc", "fossil_vs_best")
    for key in keys:
        if all(key in r.improvements for r in reports):
            curves[key] = [r.improvements[key] for r in reports]
    # long-term-dynamics curves against the pure chain model
    by_kind_cols = {}
    for jcol, name in enumerate(names):
        by_kind_cols.setdefault(parse_kind_spec(name)[0], jcol)
    if "fmc" in by_kind_cols:
        fmc_col = grid[:, by_kind_cols["fmc"]]
        fossil_cols = [j for j, n in enumerate(names) if parse_kind_spec(n)[0] == "fossil"]
        if fossil_cols:
            best_f = grid[:, fossil_cols].max(axis=1)
            curves["fossil_vs_fmc"] = [improvement_pct(a, b) for a, b in zip(best_f, fmc_col)]
        if "fpmc" in by_kind_cols:
            fpmc_col = grid[:, by_kind_cols["fpmc"]]
            curves["fpmc_vs_fmc"] = [improvement_pct(a, b) for a, b in zip(fpmc_col, fmc_col)]
    return SparsityStudyReport(thresholds, names, grid, summaries, curves, reports,
                               seed=config.seed, checksum=dataset_checksum(base),
                               config=reports[0].config if reports else {})


# ---------------------------------------------------------------------------
# Qualitative exports
# ---------------------------------------------------------------------------

def export_user_weights(model: mdl.Model, ds: SequenceDataset):
    """Rows of (user id, train action count, first-lag weight), coldest first."""
    if model.kind != "fossil":
        raise DataError("per-user weights exist only for fossil models")
    if not ds.split:
        raise DataError("weight export needs a split dataset")
    counts = np.array([len(s) - 2 for s in ds.sequences])
    order = np.lexsort((np.arange(ds.n_users), counts))
    return [(ds.user_ids[u], int(counts[u]), float(model.params.eta_user[u, 0]))
            for u in order]


def user_weights_table(rows) -> str:
    lines = ["user\ttrain_actions\teta_user_1"]
    for user, cnt, w in rows:
        lines.append(f"{user}\t{cnt}\t{w:.8f}")
    return "\n".join(lines) + "\n"


def recommend_next(model: mdl.Model, ds: SequenceDataset, u: int, k: int):
    """Top-k unconsumed items given the user's whole observed sequence."""
    seq = ds.sequences[u]
    consumed = np.unique(seq)
    scorer = mdl.make_scorer(model)
    s = scorer(u, consumed, seq[::-1])
    candidates = np.ones(ds.n_items, dtype=bool)
    candidates[consumed] = False
    idx = np.flatnonzero(candidates)
    if idx.size == 0:
        return np.empty(0, dtype=np.int64), np.empty(0)
    order = np.lexsort((idx, -s[idx]))[: min(k, idx.size)]
    top = idx[order]
    return top.astype(np.int64), s[top]


def recommendation_table(model: mdl.Model, items, scores) -> str:
    lines = ["rank\titem\tscore"]
    for r, (it, sc) in enumerate(zip(items, scores), start=1):
        lines.append(f"{r}\t{model.item_ids[int(it)]}\t{sc:.8f}")
    return "\n".join(lines) + "\n"


def transition_table(model: mdl.Model, query: int, k: int) -> str:
    from .core import rank_transitions

    if model.kind not in ("fossil", "fism"):
        raise DataError("transition queries need a fossil or fism model")
    top = rank_transitions(model.params, query, k)
    s = model.params.Q[top] @ model.params.P[query]
    lines = ["rank\titem\tscore"]
    for r, (it, sc) in enumerate(zip(top, s), start=1):
        lines.append(f"{r}\t{model.item_ids[int(it)]}\t{sc:.8f}")
    return "\n".join(lines) + "\n"


def grid_search_lambda(ds: SequenceDataset, kind: str, config: TrainConfig,
                       grid=(1.0, 0.1, 0.01)):
    """Pick the decay strength with the best validation AUC."""
    scores = {}
    for lam in grid:
        cfg = TrainConfig(**{**vars(config), "lam": lam})
        scores[lam] = train(ds, kind, cfg).best_val_auc
    best = max(scores, key=lambda l: (scores[l], -l))
    return best, scores
