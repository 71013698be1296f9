from .regularizers import (
    METHODS,
    MethodConfig,
    RegularizerState,
    accumulate_importance,
    add_ewc_anchor,
    consolidate_ewc,
    consolidate_mas,
    load_state,
    penalty_quadratic,
    save_state,
    si_accumulate_step,
    si_begin_episode,
    si_consolidate,
    update_ewc_online,
)
from .replay import ReplayBuffer, buffer_insert, buffer_insert_arrays, buffer_minibatch
from .training import (
    EpisodeLog,
    TrainConfig,
    TrainingHistory,
    default_domain_index,
    evaluate,
    evaluate_tables,
    pool,
    strategic_weights,
    table_means,
    train_domain_incremental,
    train_offline,
)

__all__ = [
    "METHODS", "EpisodeLog", "MethodConfig", "RegularizerState", "ReplayBuffer", "TrainConfig", "TrainingHistory",
    "accumulate_importance", "add_ewc_anchor", "buffer_insert", "buffer_insert_arrays", "buffer_minibatch",
    "consolidate_ewc", "consolidate_mas", "default_domain_index", "evaluate", "evaluate_tables", "load_state",
    "penalty_quadratic", "pool", "save_state", "si_accumulate_step", "si_begin_episode", "si_consolidate",
    "strategic_weights", "table_means", "train_domain_incremental", "train_offline", "update_ewc_online",
]
