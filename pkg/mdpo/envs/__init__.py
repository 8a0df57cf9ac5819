from .chain import ChainEnv, Trajectory, ADVANCE, sample_trajectory, sample_trajectories, sample_start_states, \
    policy_value, state_values, make_reference_policy, enumerate_trajectories
