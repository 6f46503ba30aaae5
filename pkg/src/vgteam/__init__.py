"""Multi-agent slideshow storytelling video generation."""

from vgteam.core import LengthClass, RunMetrics, TopicClass, UserPrompt
from vgteam.tower import PipelineConfig, PipelineResult, run_pipeline

__all__ = ["LengthClass", "PipelineConfig", "PipelineResult", "RunMetrics", "TopicClass", "UserPrompt", "run_pipeline"]
__version__ = "0.1.0"
