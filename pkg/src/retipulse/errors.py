"""Exception types raised across the pipeline."""


class RetiPulseError(Exception):
    """Base class for all library errors."""


class InvalidParameterError(RetiPulseError, ValueError):
    pass


class OutOfRangeError(RetiPulseError, ValueError):
    pass


class ShapeError(RetiPulseError, ValueError):
    pass


class NoVesselError(RetiPulseError):
    """No centerline could be selected (empty path set or click too far away)."""


class TrackingLostError(NoVesselError):
    def __init__(self, frame, message=None):
        self.frame = frame
        super().__init__(message or f"tracking lost at frame {frame}")


class LowContrastError(RetiPulseError):
    pass


class DegeneratePathError(RetiPulseError, ValueError):
    pass


class TooShortError(RetiPulseError, ValueError):
    pass


class InsufficientPulsationError(RetiPulseError):
    pass


class UndefinedMetricError(RetiPulseError, ZeroDivisionError):
    def __init__(self, metric):
        self.metric = metric
        super().__init__(f"{metric} is undefined (zero denominator)")


class TooFewPointsError(RetiPulseError, ValueError):
    pass


class AnnotationError(RetiPulseError, ValueError):
    def __init__(self, line, message):
        self.line = line
        super().__init__(f"line {line}: {message}")


class ConfigError(RetiPulseError, ValueError):
    """A configuration value failed validation; ``field`` is its dotted path."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class SceneValidationError(ConfigError):
    pass
