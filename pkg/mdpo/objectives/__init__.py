from .losses import ObjectiveKind, ObjectiveSpec, RowLossInput, orpo_loss, dpo_loss, generalized_orpo_loss, \
    generalized_dpo_loss, parse_objective, DEFAULT_BETA, DEFAULT_LAMBDA
