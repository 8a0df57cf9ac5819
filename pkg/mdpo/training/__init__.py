from .optim import Adam, clip_by_global_norm
from .trainer import TrainerHyper, TrainingTrace, train, initial_policy, replay_trace, replay_indices, \
    split_trace_by_progress, RAW_PROB_MAX_HORIZON
from .runs import SeedOutcome, train_and_evaluate, run_seeds, summarize, resolve_workers
