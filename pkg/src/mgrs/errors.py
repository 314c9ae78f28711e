"""Exception types shared across the pipeline."""


class MgrsError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(MgrsError):
    """Invalid run configuration or command-line usage."""


class BackendError(MgrsError):
    """Base class for completion-backend failures."""


class BackendUnavailable(BackendError):
    """Network, auth, or endpoint failure that survived the retry budget."""


class ScriptMiss(BackendError):
    """Scripted backend has no entry for the request and no default."""


class MalformedResponse(BackendError):
    """Live backend returned a payload that cannot be parsed."""


class UnparseableChain(MgrsError):
    """Model output has no recognizable final-answer field."""


class EmptyLogprobs(MgrsError):
    """Perplexity requested over an empty token sequence."""


class NotADag(MgrsError):
    """Graph has a cycle; no topological order exists."""


class NoAnswerNodes(MgrsError):
    """Selection requested on a graph without answer nodes."""
