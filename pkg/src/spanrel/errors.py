"""Exception hierarchy; the CLI maps SpanrelError to exit code 1."""


class SpanrelError(Exception):
    """Base class for all data/validation errors raised by the toolkit."""


class SchemaError(SpanrelError):
    """Invalid relation schema or template."""


class DatasetError(SpanrelError):
    """Malformed RC/SP data or file format violation."""


class PredictionError(SpanrelError):
    """Invalid prediction record or incomplete prediction coverage."""


class ProtocolError(PredictionError):
    """Remote predictor endpoint unreachable or off-protocol."""


class DecodingError(SpanrelError):
    """Decoding precondition violated (missing prediction, bad config)."""


class CalibrationError(SpanrelError):
    """Threshold calibration impossible (e.g. empty dev set)."""
