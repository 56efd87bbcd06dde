"""tonecanvas: live MIDI keyboard input to ABC notation, music analysis,
imagery prompts, and generated images."""

__version__ = "0.1.0"

from .analysis import (
    EmotionEstimate,
    MusicFeatures,
    analyze,
    estimate_key,
    estimate_tempo,
    infer_emotion,
)
from .describe import (
    GenerationMode,
    MockBackend,
    build_prompt,
    describe_imagery,
)
from .imaging import (
    ImageEvent,
    ImageRequest,
    ImageStore,
    MockImageBackend,
    generate,
    pacing_decide,
)
from .midi import Clip, IngestBuffer, NoteEvent, RawMidiEvent
from .notation import encode_clip, parse_abc, render_abc, score_to_notes
from .session import SessionConfig, SessionEngine, SessionRecord, run_session
from .smf import FileReplaySource, parse_smf, replay_midi_file
from .theory import Key, Meter
from .visuals import VisualParams, map_features, params_to_prompt_clauses

__all__ = [
    "__version__",
    "Clip",
    "EmotionEstimate",
    "FileReplaySource",
    "GenerationMode",
    "ImageEvent",
    "ImageRequest",
    "ImageStore",
    "IngestBuffer",
    "Key",
    "Meter",
    "MockBackend",
    "MockImageBackend",
    "MusicFeatures",
    "NoteEvent",
    "RawMidiEvent",
    "SessionConfig",
    "SessionEngine",
    "SessionRecord",
    "VisualParams",
    "analyze",
    "build_prompt",
    "describe_imagery",
    "encode_clip",
    "estimate_key",
    "estimate_tempo",
    "generate",
    "infer_emotion",
    "map_features",
    "pacing_decide",
    "params_to_prompt_clauses",
    "parse_abc",
    "parse_smf",
    "render_abc",
    "replay_midi_file",
    "run_session",
    "score_to_notes",
]
