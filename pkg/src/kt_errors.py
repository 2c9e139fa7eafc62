"""
Error hierarchy for the slam-fm pipeline
Every error names the module it comes from so the CLI can report it
"""
from typing import Optional


class SlamFmError(Exception):
    """Base class for all pipeline errors"""
    module = "slamfm"

    def __init__(self, message: str, module: Optional[str] = None):
        super().__init__(message)
        if module is not None:
            self.module = module


# slam_ingest
class MalformedLine(SlamFmError):
    module = "slam_ingest"

    def __init__(self, line_no: int, line: str, reason: str):
        super().__init__(f"line {line_no}: {reason}: {line!r}")
        self.line_no = line_no
        self.line = line
        self.reason = reason


class DuplicateKey(SlamFmError):
    module = "slam_ingest"

    def __init__(self, line_no: int, key: str):
        super().__init__(f"line {line_no}: duplicate metadata key '{key}'")
        self.line_no = line_no
        self.key = key


class MissingLabel(SlamFmError):
    module = "slam_ingest"


class EmptyDataset(SlamFmError):
    module = "slam_ingest"


# encoder
class UnlabeledToken(SlamFmError):
    module = "encoder"


class SchemaMismatch(SlamFmError):
    module = "encoder"


# model_core
class IndexOutOfRange(SlamFmError):
    module = "model_core"


class DimensionMismatch(SlamFmError):
    module = "model_core"


class NonFiniteGradient(SlamFmError):
    module = "model_core"

    def __init__(self, message: str, epoch: Optional[int] = None, batch: Optional[int] = None):
        if epoch is not None:
            message = f"{message} at epoch {epoch}, batch {batch}"
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch


class ConfigError(SlamFmError):
    module = "model_core"


# trainer
class NonFiniteLoss(SlamFmError):
    module = "trainer"

    def __init__(self, epoch: int, batch: int, loss: float):
        super().__init__(f"non-finite loss {loss} at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch


class EmptyTrainingSet(SlamFmError):
    module = "trainer"


class ShapeMismatch(SlamFmError):
    module = "trainer"


# metrics
class SingleClass(SlamFmError):
    module = "metrics"


# synth_oracle
class DegenerateVariance(SlamFmError):
    module = "synth_oracle"


# cli
class UsageError(SlamFmError):
    module = "cli"
