from .coding import ConvCode, encode_frame
from .engine import (PhyEngine, SlotOutcome, build_system_matrix, estimate_capture_table, gen_channels,
                     gen_spreading)
from .gomp import GompResult, detect_gomp
from .scenario import GompSettings, PhyScenario

__all__ = [
    "ConvCode", "encode_frame", "PhyEngine", "SlotOutcome", "build_system_matrix", "estimate_capture_table",
    "gen_channels", "gen_spreading", "GompResult", "detect_gomp", "GompSettings", "PhyScenario",
]
