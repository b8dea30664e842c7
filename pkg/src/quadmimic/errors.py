"""Package-wide exception types.

Grouped here so the CLI can map them to exit codes in one place:
usage errors exit 1, data errors (Schema/Unit/PastEnd/Spec/Incompatible)
exit 2, runtime divergence exit 3.
"""


class SchemaError(Exception):
    """A file or container violates its documented schema."""


class UnitError(Exception):
    """A numeric value is non-finite or outside its unit sanity range."""


class PastEnd(Exception):
    """Sample time outside a non-cyclic motion's span."""


class SpecError(Exception):
    """Gait parameters outside the supported ranges."""


class DivergedError(Exception):
    """Simulator state exceeded sanity bounds."""


class IncompatibleMotions(Exception):
    """Motions cannot be stitched (e.g. differing dt)."""
