"""Exception hierarchy.

Every error raised by the package derives from :class:`AgriSynthError`.
The three intermediate classes decide the CLI exit code: usage problems
exit 1, bad data or failed validation exit 2, external-service trouble
exits 3.
"""


class AgriSynthError(Exception):
    exit_code = 2


class UsageError(AgriSynthError):
    exit_code = 1


class DataError(AgriSynthError):
    exit_code = 2


class ExternalServiceError(AgriSynthError):
    exit_code = 3


# tables and CSV
class MalformedCsvError(DataError):
    pass


class TypeCoercionError(DataError):
    pass


class DuplicateHeaderError(DataError):
    pass


class IoFailureError(DataError):
    pass


class UnknownColumnError(DataError):
    pass


class TypeMismatchError(DataError):
    pass


# catalog
class ManifestParseError(DataError):
    pass


class DuplicateIdError(DataError):
    pass


class DanglingPathError(DataError):
    pass


# generation
class InvalidSpecError(DataError):
    pass


class NotPositiveSemiDefiniteError(InvalidSpecError):
    pass


# augmentation
class TooFewRowsError(DataError):
    pass


class KTooLargeError(DataError):
    pass


class NonNumericFeatureError(DataError):
    pass


class NonNumericColumnError(DataError):
    pass


class EmptyStratumError(DataError):
    pass


class DegenerateIndexError(DataError):
    pass


# validation
class EmptySampleError(DataError):
    pass


class ZeroVarianceError(DataError):
    pass


class SingularCovarianceError(DataError):
    pass


class LengthMismatchError(DataError):
    pass


# models
class UnknownSeasonError(DataError):
    pass


class EmptySideError(DataError):
    pass


class SingularSystemError(DataError):
    pass


class ZeroTargetError(DataError):
    pass


# optimization
class ModelFailureError(DataError):
    pass


class InvalidConfigError(DataError):
    pass


# simulation
class EmptyWeatherError(DataError):
    pass


class ActionOutOfRangeError(DataError):
    pass


class MissingWeatherDataError(DataError):
    pass


class InvalidCoordsError(DataError):
    pass


class NetworkFailureError(ExternalServiceError):
    pass


class ApiSchemaChangeError(ExternalServiceError):
    pass


# visualization
class UnsortedXError(DataError):
    pass


class DuplicateCellError(DataError):
    pass
