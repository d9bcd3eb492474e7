"""Exception hierarchy; the CLI maps each family to an exit code."""


class SceneEmotionError(Exception):
    exit_code = 1


class ConfigError(SceneEmotionError):
    exit_code = 2


class DataError(SceneEmotionError):
    exit_code = 3


class TrainingError(SceneEmotionError):
    exit_code = 4


class BundleFormatError(DataError):
    """Raised when a model bundle has a bad magic header, version or layout."""


class StageError(SceneEmotionError):
    """Wraps a failure with the name of the pipeline stage that raised it."""

    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", TrainingError.exit_code)
