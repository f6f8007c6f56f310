"""Synthetic IQ frames for the digital modulation pools."""

from .channel import ChannelConfig, add_awgn, apply_channel
from .generate import (
    ChannelRanges,
    DatasetSpec,
    IQFrame,
    frame_components,
    frame_plan,
    generate_dataset,
    generate_frame,
    profile,
)
from .modulation import Modulation, constellation, cpfsk_waveform, map_bits
from .pulse import pulse_shape, rrc_taps

__all__ = [
    "ChannelConfig", "ChannelRanges", "DatasetSpec", "IQFrame", "Modulation",
    "add_awgn", "apply_channel", "constellation", "cpfsk_waveform", "frame_components",
    "frame_plan", "generate_dataset", "generate_frame", "map_bits", "profile",
    "pulse_shape", "rrc_taps",
]
