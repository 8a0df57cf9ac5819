from .network import LossNetwork, LossNetParams, NetworkParams, loss_net_apply, project_params, init_params, \
    save_params, load_params, load_network, ACTIVATIONS, HIDDEN_UNITS
