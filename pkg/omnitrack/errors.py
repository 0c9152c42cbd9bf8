"""Typed exceptions raised by omnitrack.

Every error carries a stable ``code`` so the CLI and the MCP server can
report failures without string matching. Concrete classes also derive from
the builtin a caller would naturally catch (``ValueError``, ``OSError``).
"""


class OmniTrackError(Exception):
    """Base class for all omnitrack errors."""

    code = "omnitrack"


class DomainError(OmniTrackError, ValueError):
    """An argument lies outside the domain of a geometric operation."""

    code = "domain"


class EmptyMaskError(OmniTrackError, ValueError):
    code = "empty_mask"


class DegenerateMaskError(OmniTrackError, ValueError):
    """The mask has no well-defined spherical centre (antipodally balanced)."""

    code = "degenerate_mask"


class DimensionMismatchError(OmniTrackError, ValueError):
    code = "dimension"


class BoxOutsideError(OmniTrackError, ValueError):
    """A local box does not overlap the local image at all."""

    code = "box_outside"


class TrackerError(OmniTrackError, RuntimeError):
    code = "tracker"


class AnnotationParseError(OmniTrackError, ValueError):
    """An annotation line could not be parsed."""

    code = "parse"


class FieldCountError(AnnotationParseError):
    code = "field_count"


class NumberFormatError(AnnotationParseError):
    code = "number"


class AngleRangeError(AnnotationParseError):
    code = "angle_range"


class SequenceLayoutError(OmniTrackError, ValueError):
    """A sequence directory does not follow the expected layout."""

    code = "layout"


class MissingFramesError(SequenceLayoutError):
    code = "missing_frames"


class CountMismatchError(SequenceLayoutError):
    code = "count_mismatch"


class AspectError(SequenceLayoutError):
    code = "aspect"


class LengthMismatchError(OmniTrackError, ValueError):
    code = "length_mismatch"


class OutputError(OmniTrackError, OSError):
    code = "output"
