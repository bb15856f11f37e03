"""Exception hierarchy shared across the package."""


class ByteHueError(Exception):
    """Base class for all operational errors raised by bytehue."""


# --- hex / bytecode input ---------------------------------------------------

class HexInputError(ByteHueError):
    pass


class EmptyBytecodeError(HexInputError):
    pass


class OddLengthError(HexInputError):
    pass


class NonHexCharacterError(HexInputError):
    def __init__(self, position: int, char: str):
        self.position = position
        self.char = char
        super().__init__(f"non-hex character {char!r} at index {position}")


class BytecodeTooLargeError(HexInputError):
    def __init__(self, size: int, limit: int):
        self.size = size
        self.limit = limit
        super().__init__(f"bytecode is {size} bytes, limit is {limit}")


# --- remote fetching ---------------------------------------------------------

class FetchError(ByteHueError):
    pass


class AuthMissingError(FetchError):
    pass


class NotFoundError(FetchError):
    pass


class NetworkError(FetchError):
    pass


class RateLimitedError(FetchError):
    pass


# --- dataset handling --------------------------------------------------------

class DatasetError(ByteHueError):
    pass


class UnknownLabelError(DatasetError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"label {name!r} is not in the vocabulary")


class EmptyDatasetError(DatasetError):
    pass


class DegenerateSplitError(DatasetError):
    pass


class SchemaVersionMismatchError(DatasetError):
    pass


class CorruptRecordError(DatasetError):
    def __init__(self, line: int, reason: str):
        self.line = line
        super().__init__(f"corrupt record at line {line}: {reason}")


# --- encoding ----------------------------------------------------------------

class EncodingError(ByteHueError):
    pass


class InconsistentLengthError(EncodingError):
    pass


class UnsupportedPngVariantError(EncodingError):
    pass


# --- network engine ----------------------------------------------------------

class NetworkEngineError(ByteHueError):
    pass


class InvalidConfigError(NetworkEngineError):
    pass


class ShapeMismatchError(NetworkEngineError):
    pass


class ArityMismatchError(NetworkEngineError):
    pass


class StaleCacheError(NetworkEngineError):
    pass


class InvalidEpsilonError(NetworkEngineError):
    pass


class TooLargeForOracleError(NetworkEngineError):
    pass


# --- training ----------------------------------------------------------------

class TrainingError(ByteHueError):
    pass


class EmptyTrainSetError(TrainingError):
    pass


class EmptySplitError(TrainingError):
    pass


class DivergenceDetectedError(TrainingError):
    pass


class FreezeIndexInvalidError(TrainingError):
    pass


class HeadArityMismatchError(TrainingError):
    pass


# --- bundles / serving -------------------------------------------------------

class BundleError(ByteHueError):
    pass


class MagicMismatchError(BundleError):
    pass


class ChecksumMismatchError(BundleError):
    pass


class ModelIncompatibleError(ByteHueError):
    pass


class ScanRequestError(ByteHueError):
    pass
