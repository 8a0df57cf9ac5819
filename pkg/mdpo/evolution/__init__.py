from .openai_es import EsConfig, EsState, FitnessFunction, es_gradient_estimate, evolve, standardize, \
    antithetic_noise, final_mean
from .fitness import FitnessSpec, LossNetFitness
