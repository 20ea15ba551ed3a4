"""Exception types shared across the package."""


class ViewStitchError(Exception):
    """Base class for all package errors."""


class ConfigurationError(ViewStitchError):
    """Invalid configuration value or combination."""


class InputError(ViewStitchError):
    """Malformed runtime input (shape mismatch, bad index)."""


class NumericGuardError(ViewStitchError):
    """A numeric precondition (clamp floor, positive definiteness) failed."""


class CapacityError(ViewStitchError):
    """A context window exceeds the denoiser's capacity."""


class ScheduleError(ViewStitchError):
    """A window schedule violates its structural invariants."""


class NumericFailure(ViewStitchError):
    """Non-finite values appeared during sampling."""

    def __init__(self, step, chunk, detail=""):
        self.step = step
        self.chunk = chunk
        msg = f"non-finite values at denoising step {step}, chunk {chunk}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)
