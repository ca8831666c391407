"""Exception hierarchy shared across the pipeline."""


class RessegError(Exception):
    """Base class for all pipeline errors."""


class MissingModality(RessegError):
    def __init__(self, modality, path=None):
        self.modality = modality
        msg = f"missing modality file: {modality}"
        if path is not None:
            msg += f" (looked under {path})"
        super().__init__(msg)


class ShapeMismatch(RessegError):
    pass


class DegenerateIntensity(RessegError):
    pass


class EmptyCrop(RessegError):
    pass


class InsufficientSubjects(RessegError):
    pass


class InvalidSchedule(RessegError):
    pass


class InvalidTimestep(RessegError):
    pass


class DegenerateTimestep(RessegError):
    pass


class InvalidSteps(RessegError):
    pass


class RangeViolation(RessegError):
    pass


class TrainingDiverged(RessegError):
    def __init__(self, msg, epoch=None, step=None):
        self.epoch = epoch
        self.step = step
        if epoch is not None:
            msg = f"{msg} (epoch {epoch}, step {step})"
        super().__init__(msg)


class InvalidThreshold(RessegError):
    pass


class InvalidConfig(RessegError):
    pass


class AlignmentError(RessegError):
    pass


class IncompatibleCheckpoint(RessegError):
    pass


class MissingArtifact(RessegError):
    pass


class RefusingOverwrite(RessegError):
    pass
