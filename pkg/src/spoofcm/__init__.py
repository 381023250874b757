"""Anti-spoofing countermeasure toolkit: copy-synthesis data creation,
contrastive training over paired mini-batches, and EER-based evaluation
with significance testing."""

__version__ = "0.1.0"

from .audio_io import Waveform, read_wav, write_wav
from .errors import ConfigError, DataError, NumericalError, SpoofcmError

__all__ = [
    "Waveform",
    "read_wav",
    "write_wav",
    "SpoofcmError",
    "ConfigError",
    "DataError",
    "NumericalError",
    "__version__",
]
