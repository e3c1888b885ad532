"""The four-part user memory: situations, background, topic outlines and principles."""

from .bank import (
    BackgroundMemory, LogRelation, MemoryBank, PrincipleEntry, RelationKind, SituationEntry, SolutionRecord, TopicOutline,
)
from .builder import BuildConfig, MemoryBuilder
from .construction import (
    extract_topic_outlines, init_principles, rewrite_requirement, summarize_situations, update_background,
    update_principles,
)
from .graph import ConstructionError, Window, build_log_graph, connected_components, format_log, window_layout

__all__ = [
    "BackgroundMemory", "BuildConfig", "ConstructionError", "LogRelation", "MemoryBank", "MemoryBuilder",
    "PrincipleEntry", "RelationKind", "SituationEntry", "SolutionRecord", "TopicOutline", "Window",
    "build_log_graph", "connected_components", "extract_topic_outlines", "format_log", "init_principles",
    "rewrite_requirement", "summarize_situations", "update_background", "update_principles", "window_layout",
]
