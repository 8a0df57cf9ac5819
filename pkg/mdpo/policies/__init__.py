from .tabular import TabularPolicy, log_prob, seq_prob, log_prob_grad, score_from_counts, visit_counts
