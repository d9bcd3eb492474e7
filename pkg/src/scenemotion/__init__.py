"""Audio scene emotion classification with a stacked SVM/neural-network ensemble."""

from .dataio import Emotion
from .errors import ConfigError, DataError, SceneEmotionError, TrainingError

__version__ = "0.1.0"

__all__ = ["Emotion", "SceneEmotionError", "ConfigError", "DataError", "TrainingError", "__version__"]
