"""Exception types raised across colalab."""


class InvalidArgumentError(ValueError):
    pass


class CapacityExceededError(ValueError):
    """More distinct glyph classes were requested than the grammar can build."""

    def __init__(self, requested, capacity):
        self.requested = requested
        self.capacity = capacity
        super().__init__(
            f"requested {requested} classes but only {capacity} distinct trees exist"
        )


class DegenerateSplitError(ValueError):
    """A split produced an empty train or test partition."""

    def __init__(self, n_train, n_test, detail=""):
        self.n_train = n_train
        self.n_test = n_test
        msg = f"degenerate split: {n_train} train / {n_test} test classes"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class ShapeError(ValueError):
    pass


class StateError(RuntimeError):
    """An operation ran before its prerequisite artifact existed."""


class NumericError(FloatingPointError):
    def __init__(self, message, iteration=None):
        self.iteration = iteration
        if iteration is not None:
            message = f"{message} (iteration {iteration})"
        super().__init__(message)
