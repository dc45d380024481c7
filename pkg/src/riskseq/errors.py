"""Exception types; ``category`` is what the CLI prints on failure."""


class RiskSeqError(Exception):
    category = "error"


class ConfigError(RiskSeqError, ValueError):
    category = "config"


class DataError(RiskSeqError, ValueError):
    category = "data"


class CheckpointError(RiskSeqError, ValueError):
    category = "checkpoint"


class TrainingError(RiskSeqError, RuntimeError):
    category = "training"
