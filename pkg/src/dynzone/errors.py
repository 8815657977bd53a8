"""Exception types shared across the library."""


class DynzoneError(Exception):
    """Base class for all library errors."""


class UnknownWorkstation(DynzoneError):
    """A workstation id does not exist in the floor graph."""


class NoFeasiblePath(DynzoneError):
    """Endpoints are disconnected under the active segment restriction."""


class ZoneViolation(DynzoneError):
    """A workstation belongs to no zone."""


class NotATip(DynzoneError):
    """Requested transfer of a workstation that is not a tip of its zone."""


class WouldDisconnect(DynzoneError):
    """A tip transfer would break zone connectivity."""


class WouldEmptyZone(DynzoneError):
    """A tip transfer would remove a zone's last workstation."""


class NoNeighbors(DynzoneError):
    """A robot has no communication neighbors, so zone redesign cannot run."""


class ZeroVelocity(DynzoneError):
    """Robot velocity must be strictly positive."""


class DimensionMismatch(DynzoneError):
    """Consensus state length does not match the communication graph."""


class InfeasibleStart(DynzoneError):
    """Cannot build the requested number of connected zones."""


class OrphanPart(DynzoneError):
    """A part's location falls in no zone of the partition."""


class DeadlockDetected(DynzoneError):
    """No event is schedulable while parts remain in the system."""


class LayoutError(DynzoneError):
    """A layout, scenario, or partition file violates its schema."""
