"""
errors.py

Exception hierarchy shared by every stage of the pipeline. All project errors
derive from TimbreError so the CLI can report them uniformly.
"""


class TimbreError(Exception):
    """Base class for all project errors."""


class AudioFormatError(TimbreError, ValueError):
    """WAV file or audio buffer in an encoding we do not read."""


class ChannelsError(AudioFormatError):
    """Multi-channel audio where mono is required."""


class AudioTooShortError(TimbreError, ValueError):
    """Clip shorter than one analysis window."""


class ContainerError(TimbreError, ValueError):
    """Corrupt or unreadable named-tensor container."""


class FingerprintError(ContainerError):
    """Container written under a different configuration."""


class ShapeError(TimbreError, ValueError):
    """Frame or channel counts that do not line up."""


class LabelError(TimbreError, ValueError):
    """Unknown phone symbol, malformed label/F0 file or duration mismatch."""


class CorpusError(TimbreError, ValueError):
    """Corpus cannot be built or iterated as requested."""


class FrozenParameterError(TimbreError, RuntimeError):
    """A frozen encoder received a gradient or changed during training."""


class TrainingDivergedError(TimbreError, RuntimeError):
    """Loss became non-finite; the last good state was written to disk."""

    def __init__(self, message, checkpoint_path=None):
        super().__init__(message)
        self.checkpoint_path = checkpoint_path
