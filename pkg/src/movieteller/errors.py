"""Exception hierarchy shared across the pipeline."""


class MovieTellerError(Exception):
    """Base class for all pipeline errors."""


class ConfigError(MovieTellerError):
    """Invalid configuration value or file."""


class IngestError(MovieTellerError):
    """Frame source cannot be opened or decoded."""


class SegmentationError(MovieTellerError):
    """Scene segmentation failed (empty source, dimension mismatch)."""


class GroundingError(MovieTellerError):
    """Identity database or face matching failure."""


class FaceToolError(MovieTellerError):
    """Face tool service unreachable or returned an invalid reply."""


class PromptError(MovieTellerError):
    """Prompt rendering contract violated."""


class LLMError(MovieTellerError):
    """Chat endpoint failure after retries, or malformed reply."""


class ContextLengthExceeded(LLMError):
    """Prompt does not fit the model context; triggers an extra abstraction round."""


class StageError(MovieTellerError):
    """A pipeline stage failed; carries the stage name for CLI reporting."""

    def __init__(self, stage: str, message: str, resumable: bool = True) -> None:
        super().__init__(f"stage '{stage}': {message}")
        self.stage = stage
        self.resumable = resumable


class EvaluationError(MovieTellerError):
    """Judge reply unusable or evaluation inputs missing."""
