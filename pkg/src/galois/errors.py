"""Exception hierarchy shared by all galois modules."""


class GaloisError(Exception):
    """Base class for every error raised by this package."""


class VocabularyError(GaloisError):
    """Duplicate predicate names, unknown predicates, or malformed vocabularies."""


class ConfigError(GaloisError):
    """Invalid configuration values (zero depth, empty atom pools, bad sizes)."""


class DomainError(GaloisError):
    """Numeric input outside its required domain (e.g. not in [0, 1])."""


class ShapeError(GaloisError):
    """Mismatched weight / library / valuation shapes."""


class TapeError(GaloisError):
    """Backward pass requested on a tape without usable seed slots."""


class NumericsError(GaloisError):
    """Non-finite values encountered during an optimizer update."""


class BindingError(GaloisError):
    """A sketch hole has no usable binding."""


class SelectorError(GaloisError):
    """A clause selector matched nothing."""


class GenerationError(GaloisError):
    """Layout generation failed to produce a solvable grid within the retry bound."""


class LifecycleError(GaloisError):
    """Environment stepped after the episode finished."""


class ResolutionError(GaloisError):
    """Subgoal resolution failed: no matching object, or target unreachable."""


class ReuseError(GaloisError):
    """Weight transfer requested for heads/clauses absent from the target vocabulary."""


class ProgramShapeError(GaloisError):
    """AST is syntactically valid but not executable by the sketch interpreter."""


class ParseError(GaloisError):
    """Clause-program syntax error, with position info."""

    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column
