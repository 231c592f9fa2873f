"""Sequential recommendation with fused item similarity and Markov chains."""

from .core import FossilParams, Hyper, UserContext, compose_user_vector
from .core import init_fossil_params, rank_transitions, score, score_all
from .data import (DataError, Event, EventLog, FileFormat, SequenceDataset,
                   build_sequences, densify, load_dataset, load_events,
                   save_dataset, split_leave_last, summarize, truncate_recent)
from .evaluation import (EvalReport, SparsityStudyReport, auc, evaluate_models,
                         export_user_weights, recommend_next, sparsity_study)
from .models import Model, init_model, load_model, make_scorer, save_model
from .training import (NumericError, TrainConfig, TrainResult, Triple,
                       apply_update, build_arrays, fit_pop, sample_triple,
                       sbpr_gradient, train)

__version__ = "0.1.0"
