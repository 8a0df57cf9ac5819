class MdpoError(Exception):
    """
    Base class for every error raised by the toolkit.
    """


class DomainError(MdpoError, ValueError):
    """
    A value lies outside the domain of a potential, simplex or trajectory.
    """


class ConfigurationError(MdpoError, ValueError):

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__('; '.join(self.violations))


class NumericalError(MdpoError, ArithmeticError):

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class SolverError(NumericalError):

    def __init__(self, message, gradient_norm):
        super().__init__(f'{message} (final gradient norm {gradient_norm:.3e})', residual=gradient_norm)
        self.gradient_norm = gradient_norm


class TrainingDivergedError(NumericalError):

    def __init__(self, step, inputs):
        super().__init__(f'non-finite loss at step {step}: {inputs}')
        self.step = step
        self.inputs = inputs


class DatasetFormatError(MdpoError, ValueError):

    def __init__(self, line, message):
        super().__init__(f'line {line}: {message}')
        self.line = line
