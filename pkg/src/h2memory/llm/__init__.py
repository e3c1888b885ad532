"""Model access: prompt registry, output contracts, backends and the validating gateway."""

from .backends import BackendError, CompletionRequest, MockBackend, OpenAICompatibleBackend, bindings_hash, scripted
from .gateway import CallCapture, CompletionResult, Gateway, TokenBucket, ValidationFailure
from .jsonext import JSONExtractionError, extract_json
from .prompts import MissingBindingError, PromptTemplate, UnknownTemplateError, get_template, render_prompt, template_ids
from .schemas import ASPECTS, FEEDBACK_TYPES, GSCORE_VALUES, SchemaViolation, validate_output

__all__ = [
    "ASPECTS", "FEEDBACK_TYPES", "GSCORE_VALUES", "BackendError", "CallCapture", "CompletionRequest",
    "CompletionResult", "Gateway", "JSONExtractionError", "MissingBindingError", "MockBackend",
    "OpenAICompatibleBackend", "PromptTemplate", "SchemaViolation", "TokenBucket", "UnknownTemplateError",
    "ValidationFailure", "bindings_hash", "extract_json", "get_template", "render_prompt", "scripted",
    "template_ids", "validate_output",
]
