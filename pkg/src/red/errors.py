"""Exception types shared across the package.

Every error carries a ``kind`` string so the CLI can emit machine-readable
error payloads.
"""


class RedError(Exception):
    kind = "RedError"
    #: CLI exit code: 2 for bad config/input, 3 for runtime failures.
    exit_code = 3

    def __init__(self, message: str = ""):
        super().__init__(message or self.kind)

    def to_json(self) -> dict:
        return {"kind": self.kind, "message": str(self)}


class InputError(RedError, ValueError):
    exit_code = 2


class ShapeMismatch(InputError):
    kind = "ShapeMismatch"


class InvalidStep(InputError):
    kind = "InvalidStep"


class DegenerateData(InputError):
    kind = "DegenerateData"


class InvalidThreshold(InputError):
    kind = "InvalidThreshold"


class EmptyDataset(InputError):
    kind = "EmptyDataset"


class BottleneckSpec(InputError):
    kind = "BottleneckSpec"


class RegularizationRequired(InputError):
    kind = "RegularizationRequired"


class NonDiscreteInput(InputError):
    kind = "NonDiscreteInput"


class EmptyLosses(InputError):
    kind = "EmptyLosses"


class NegativeLoss(InputError):
    kind = "NegativeLoss"


class InvalidAction(InputError):
    kind = "InvalidAction"


class InvalidCount(InputError):
    kind = "InvalidCount"


class InvalidDiscount(InputError):
    kind = "InvalidDiscount"


class ConfigError(InputError):
    kind = "ConfigError"


class DatasetNotFound(InputError):
    kind = "DatasetNotFound"


class ModelNotFound(InputError):
    kind = "ModelNotFound"


class EmptyGrid(InputError):
    kind = "EmptyGrid"


class EmptySweep(InputError):
    kind = "EmptySweep"


class NoRuns(InputError):
    kind = "NoRuns"


class NoComponents(RedError):
    kind = "NoComponents"


class RewardOutOfRange(RedError):
    kind = "RewardOutOfRange"
