from .potential import OmegaPotential, PotentialKind, SimplexPoint, potential_inverse, mirror_map_value, bregman, \
    PROB_EPS
