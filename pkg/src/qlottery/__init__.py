"""Seedable simulator and verification harness for quantum lottery protocols."""

from .bits import BitString
from .config import AdversaryConfig, Attack, RunConfig, Scheme, load_config, parse_config
from .protocol import LotteryAborted, detection_stats, run_lottery
from .rng import RandomStream, unique_id
from .transcript import ProtocolTranscript, verify_transcript_dict

__all__ = [
    "AdversaryConfig",
    "Attack",
    "BitString",
    "LotteryAborted",
    "ProtocolTranscript",
    "RandomStream",
    "RunConfig",
    "Scheme",
    "detection_stats",
    "load_config",
    "parse_config",
    "run_lottery",
    "unique_id",
    "verify_transcript_dict",
]

__version__ = "0.1.0"
