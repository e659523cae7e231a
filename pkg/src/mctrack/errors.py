"""Exception types shared across the tracking pipeline."""


class TrackError(Exception):
    """Base class for all mctrack errors."""


# --- geometry ---

class SingularMatrix(TrackError):
    pass


class PointAtCamera(TrackError):
    pass


class PointBehindCamera(TrackError):
    pass


class RayParallelToGround(TrackError):
    pass


# --- assignment ---

class EmptyMatrix(TrackError):
    pass


# --- io ---

class ParseError(TrackError):
    pass


class DanglingReference(TrackError):
    pass


class DimensionMismatch(TrackError):
    pass


class IoError(TrackError):
    pass


# --- affinity ---

class EmptyCluster(TrackError):
    pass


class NotSequential(TrackError):
    pass


class NoOverlap(TrackError):
    pass


class FeatureMismatch(TrackError):
    pass


class DegenerateData(TrackError):
    pass


# --- tracklets ---

class InsufficientData(TrackError):
    pass


# --- graph / multicut ---

class MissingWeights(TrackError):
    pass


class InconsistentLabeling(TrackError):
    pass


class InfeasibleInput(TrackError):
    pass


class TooLarge(TrackError):
    pass


# --- evaluation ---

class EmptyGroundTruth(TrackError):
    pass


class MissingIdentity(TrackError):
    pass


# --- simulator / cli ---

class InvalidConfig(TrackError):
    pass


class StageError(TrackError):
    """Pipeline stage failure; carries the stage name."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
