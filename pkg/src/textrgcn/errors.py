"""Exception types shared across the package.

Every library error derives from :class:`TextGraphError` and carries the
process exit code the CLI maps it to (1 usage/config, 2 data, 3 numeric).
"""


class TextGraphError(Exception):
    exit_code = 2


class ConfigError(TextGraphError):
    exit_code = 1


# corpus
class AllTokensFiltered(TextGraphError):
    pass


class EmptyClass(TextGraphError):
    pass


class UnlabeledDocuments(TextGraphError):
    pass


class CorpusParseError(TextGraphError):
    pass


# graph
class ZeroMarginal(TextGraphError):
    pass


class DanglingEdge(TextGraphError):
    pass


class DuplicateEdge(TextGraphError):
    pass


class GraphFormatError(TextGraphError):
    pass


class NodeCountMismatch(TextGraphError):
    pass


# features
class BadMagic(TextGraphError):
    pass


class DimensionMismatch(TextGraphError):
    pass


class TruncatedRecord(TextGraphError):
    pass


class EmptyPool(TextGraphError):
    pass


class MissingKey(TextGraphError):
    pass


# rgcn / train
class ShapeMismatch(TextGraphError):
    pass


class NonFiniteInput(TextGraphError):
    exit_code = 3


class EmptyMask(TextGraphError):
    pass


class StaleCache(TextGraphError):
    pass
