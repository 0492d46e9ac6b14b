"""Post-handshake identification: frames, presentation exchange and the flow engine."""

from .engine import (
    IdentificationConfig,
    IdentificationMode,
    IdentificationOutcome,
    IdentificationResult,
    run_identification,
)
from .frames import Flow, Frame, FrameReader, FrameType, decode_frame, encode_frame
from .presentation_exchange import PresentationRequest, RequestTemplate
