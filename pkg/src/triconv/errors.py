"""Exception types shared across the simulator and its tooling."""


class SimulatorError(Exception):
    """Base class for every error raised by this package."""


# --- layer / arch configuration ---

class NonPositiveDim(SimulatorError):
    pass


class KernelLargerThanPaddedIfmap(SimulatorError):
    pass


class StrideIndivisible(SimulatorError):
    pass


class InvalidArch(SimulatorError):
    pass


class UnsupportedStrideForSim(SimulatorError):
    pass


# --- golden reference ---

class ShapeMismatch(SimulatorError):
    pass


class ChannelCountMismatch(SimulatorError):
    pass


class PlanMismatch(SimulatorError):
    pass


# --- memory model ---

class OutOfBounds(SimulatorError):
    pass


# --- slice engine ---

class BusyError(SimulatorError):
    pass


class MissingInput(SimulatorError):
    pass


class ArityMismatch(SimulatorError):
    pass


# --- recycling buffer ---

class IfmapTooWide(SimulatorError):
    pass


class IfmapTooNarrow(SimulatorError):
    pass


class NotConfigured(SimulatorError):
    pass


class Underflow(SimulatorError):
    pass


class WrongPhase(SimulatorError):
    pass


class ModeChangeMidLayer(SimulatorError):
    pass


# --- orchestrator ---

class LaneDesync(SimulatorError):
    pass


# --- analytics ---

class UnsupportedMode(SimulatorError):
    pass


class ModelMismatch(SimulatorError):
    def __init__(self, message, deltas=None):
        super().__init__(message)
        self.deltas = deltas or {}


# --- cli / reporting ---

class UsageError(SimulatorError):
    pass


class ConflictingFlags(UsageError):
    pass


class IoError(SimulatorError):
    pass


class RangeError(SimulatorError):
    pass
