"""Exception hierarchy; the CLI maps each class to an exit code."""


class ScenTreeError(Exception):
    exit_code = 1


class InputError(ScenTreeError, ValueError):
    """Malformed or inconsistent input (bad CSV, mismatched shapes, ...)."""

    exit_code = 2


class StructureError(InputError):
    """A tree, lattice or branching structure violates its structural invariants."""


class PathEnumerationRefused(ScenTreeError):
    """Raised when the number of scenarios exceeds the enumeration cap."""

    exit_code = 3

    def __init__(self, count: int, cap: int):
        self.count = count
        self.cap = cap
        super().__init__(f"refusing to enumerate {count:.3e} paths (cap {cap})")


class ContractError(ScenTreeError):
    """An invariant that should hold after a computation does not."""

    exit_code = 3


class NumericalError(ScenTreeError, ArithmeticError):
    exit_code = 4
