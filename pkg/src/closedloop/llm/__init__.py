"""Model access: prompt templates, backends, gateway and transcripts."""

from .backends import (
    Completion,
    CompletionRequest,
    FatalLlmError,
    LlmError,
    QueueExhausted,
    RemoteBackend,
    ScriptedBackend,
    TransientLlmError,
    join_fixture,
    split_fixture,
)
from .gateway import Gateway
from .templates import (
    KINDS,
    MissingPlaceholderError,
    PromptTemplate,
    UnknownPromptKind,
    classify_prompt,
    load_sample,
    load_template,
    render_template,
    strip_sentinel,
)
from .transcript import Transcript, TranscriptRecord

__all__ = [
    "KINDS",
    "Completion",
    "CompletionRequest",
    "FatalLlmError",
    "Gateway",
    "LlmError",
    "MissingPlaceholderError",
    "PromptTemplate",
    "QueueExhausted",
    "RemoteBackend",
    "ScriptedBackend",
    "Transcript",
    "TranscriptRecord",
    "TransientLlmError",
    "UnknownPromptKind",
    "classify_prompt",
    "join_fixture",
    "load_sample",
    "load_template",
    "render_template",
    "split_fixture",
    "strip_sentinel",
]
