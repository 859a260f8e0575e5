"""Exception types raised by the solvers."""


class McBoostError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(McBoostError, ValueError):
    def __init__(self, what, expected, got):
        self.expected = expected
        self.got = got
        super().__init__(f"{what}: expected {expected}, got {got}")


class NonFiniteError(McBoostError, ValueError):
    pass


class ZeroDiagonalError(McBoostError, ValueError):
    def __init__(self, row):
        self.row = row
        super().__init__(f"zero diagonal entry in row {row}")


class DivergenceError(McBoostError, ArithmeticError):
    def __init__(self, method, iteration, ratio):
        self.method = method
        self.iteration = iteration
        self.ratio = ratio
        super().__init__(
            f"{method} diverged at iteration {iteration}: residual grew {ratio:.3g}x"
        )


class SupportError(McBoostError, ValueError):
    """Chain kernel does not cover the support of the operator or start vector."""


class SingularError(McBoostError, ArithmeticError):
    pass


class WalkDesignError(McBoostError, ValueError):
    pass


class ParseError(McBoostError, ValueError):
    def __init__(self, path, line, message):
        self.path = path
        self.line = line
        super().__init__(f"{path}:{line}: {message}")


class NotPositiveDefiniteError(SingularError):
    pass


class IrlsError(McBoostError):
    def __init__(self, outer_iteration, cause):
        self.outer_iteration = outer_iteration
        super().__init__(f"inner solve failed at outer iteration {outer_iteration}: {cause}")
