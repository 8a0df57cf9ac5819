from .scalar import DiffScalar, lift, exp, log, tanh, sigmoid, log_sigmoid, relu, clip, power, \
    gradient, value_and_gradient, EPS
