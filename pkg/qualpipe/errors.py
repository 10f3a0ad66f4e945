"""Errors raised by the pipeline.

Every error carries the exit code the command line reports for its family.
"""


class QualpipeError(Exception):
    """Base class for all pipeline errors."""

    exit_code = 1


class ConfigError(QualpipeError, ValueError):
    """Invalid or missing configuration."""

    exit_code = 2


class EvaluatorError(QualpipeError, RuntimeError):
    """The evaluator model could not be reached or its output could not be used."""

    exit_code = 3


class ReplayMissError(EvaluatorError):
    """A request was not found in the cache while replaying."""

    def __init__(self, digest: str) -> None:
        """Initialize with the digest of the missing request."""
        self.digest = digest
        super().__init__(f"no cached response for request {digest}")


class UpstreamError(EvaluatorError):
    """The evaluator endpoint answered with an error."""

    def __init__(self, status: None | int, body: str) -> None:
        """Initialize with the HTTP status (if any) and the response body."""
        self.status = status
        self.body = body
        super().__init__(f"evaluator endpoint failed ({status}): {body[:200]}")


class RateLimitedError(UpstreamError):
    """The endpoint kept rate limiting after the backoff budget was spent."""

    def __init__(self, body: str) -> None:
        """Initialize with the last response body."""
        super().__init__(429, body)


class EvaluatorUnparseableError(EvaluatorError):
    """A discovery chunk produced no usable list after all reprompts."""

    def __init__(self, chunk_index: int) -> None:
        """Initialize with the index of the chunk."""
        self.chunk_index = chunk_index
        super().__init__(f"discovery chunk {chunk_index} returned no numbered list")


class EvaluatorInventedAttributeError(EvaluatorError):
    """The evaluator selected an attribute that was not among the candidates."""

    def __init__(self, name: str) -> None:
        """Initialize with the invented attribute name."""
        self.name = name
        super().__init__(f"evaluator invented attribute '{name}'")


class NoCandidatesError(EvaluatorError):
    """Discovery produced no candidate attributes at all."""


class NoParsableScoresError(EvaluatorError):
    """No instance received a parsed score for an attribute."""

    def __init__(self, attribute: str) -> None:
        """Initialize with the attribute name."""
        self.attribute = attribute
        super().__init__(f"no parsable score for attribute '{attribute}'")


class EmptyInsightError(EvaluatorError):
    """The evaluator returned an empty insight."""


class DataError(QualpipeError, ValueError):
    """Input data or a stage artifact is invalid."""

    exit_code = 4


class DuplicateIdError(DataError):
    """Two instances share an id."""

    def __init__(self, id_: str) -> None:
        """Initialize with the duplicated id."""
        self.id = id_
        super().__init__(f"duplicate instance id '{id_}'")


class EmptyInputError(DataError):
    """An instance has an empty input."""

    def __init__(self, id_: str) -> None:
        """Initialize with the instance id."""
        self.id = id_
        super().__init__(f"instance '{id_}' has an empty input")


class EmptyDatasetError(DataError):
    """A dataset has no instances."""


class TooFewAttributesError(DataError):
    """Fewer attributes than every instance is assigned."""

    def __init__(self, kind: str, count: int, required: int) -> None:
        """Initialize with the attribute kind, the count and the minimum."""
        self.kind = kind
        self.count = count
        self.required = required
        super().__init__(f"{count} {kind} attributes, at least {required} needed")


class MissingFieldError(DataError):
    """A record lacks a required field."""

    def __init__(self, field: str, line: int) -> None:
        """Initialize with the field name and the (1-based) line."""
        self.field = field
        self.line = line
        super().__init__(f"line {line}: field '{field}' missing")


class MalformedRecordError(DataError):
    """A line of a stage artifact could not be read."""

    def __init__(self, path: str, line: int, reason: str) -> None:
        """Initialize with the file, the (1-based) line and what was wrong."""
        self.path = path
        self.line = line
        self.reason = reason
        super().__init__(f"{path}:{line}: {reason}")


class MissingPredictionError(DataError):
    """An instance has no prediction where one is required."""

    def __init__(self, id_: str) -> None:
        """Initialize with the instance id."""
        self.id = id_
        super().__init__(f"instance '{id_}' has no prediction")


class ShapeMismatchError(DataError):
    """Two matrices do not describe the same instances and attributes."""


class MissingScoreError(DataError):
    """An assigned instance has no metric score."""

    def __init__(self, id_: str) -> None:
        """Initialize with the instance id."""
        self.id = id_
        super().__init__(f"no metric score for instance '{id_}'")


class EmptyScoresError(DataError):
    """An average was requested over no scores."""


class UnknownAttributeError(DataError):
    """An attribute name is not in the attribute set."""

    def __init__(self, name: str) -> None:
        """Initialize with the unknown name."""
        self.name = name
        super().__init__(f"unknown attribute '{name}'")


class InsufficientPoolError(DataError):
    """The pool holds fewer instances than requested."""

    def __init__(self, domain: str, available: int, requested: int) -> None:
        """Initialize with the domain and the available / requested counts."""
        self.domain = domain
        self.available = available
        self.requested = requested
        super().__init__(
            f"'{domain}': requested {requested} instances, {available} available"
        )


class LengthMismatchError(DataError):
    """Chart labels and values differ in length."""


class CommandFailedError(DataError):
    """An external metric command exited with an error."""

    def __init__(self, exit_code: None | int, stderr: str) -> None:
        """Initialize with the exit code (`None` if it never exited) and stderr."""
        self.command_exit_code = exit_code
        self.stderr = stderr
        if exit_code is None:
            msg = f"metric command did not run: {stderr.strip()}"
        else:
            msg = f"metric command exited with {exit_code}: {stderr.strip()}"
        super().__init__(msg)


class UnparseableScoreError(DataError):
    """An external metric command printed something other than a number."""

    def __init__(self, stdout: str) -> None:
        """Initialize with the standard output."""
        self.stdout = stdout
        super().__init__(f"metric command printed no score: {stdout[:80]!r}")


class InfeasibleError(QualpipeError):
    """The assignment constraints cannot be satisfied."""

    exit_code = 5


class TooLargeError(QualpipeError):
    """Exhaustive search was requested on too large an instance."""

    exit_code = 5
