"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of an operation."""


class IntegrityError(ValueError):
    """Persisted data does not match the objects it claims to describe."""


class ParseError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DivergedError(RuntimeError):
    def __init__(self, iteration: int, step: int, value: float):
        self.iteration = iteration
        self.step = step
        self.value = value
        super().__init__(
            f"non-finite loss {value!r} at iteration {iteration}, optimizer step {step}"
        )
