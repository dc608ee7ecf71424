"""Exception types shared across the package."""


class OutOfSystemError(ValueError):
    """A cube or query point lies outside the finite root system."""


class ConfigError(ValueError):
    """Invalid exponents, hypotheses or run configuration.

    ``problems`` lists every individual complaint so callers can report them
    all at once.
    """

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class DivergentIntegralError(ValueError):
    """A power integral or a homogeneous tail sum does not converge."""


class InvariantViolation(AssertionError):
    """A checked inequality or structural invariant failed."""
