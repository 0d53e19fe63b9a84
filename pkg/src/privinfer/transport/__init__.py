"""Party endpoints, wire format, metrics and link emulation."""

from .link import LAN, PROFILES, WAN_A, WAN_B, LinkClock, LinkProfile
from .message import (HEADER_SIZE, DType, Message, Phase, ProtocolId, decode)
from .metrics import MB, Recorder, Transcript
from .session import LocalHub, Session, establish_session

__all__ = [
    "DType", "HEADER_SIZE", "LAN", "LinkClock", "LinkProfile", "LocalHub", "MB",
    "Message", "PROFILES", "Phase", "ProtocolId", "Recorder", "Session",
    "Transcript", "WAN_A", "WAN_B", "decode", "establish_session",
]
