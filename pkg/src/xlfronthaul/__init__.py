"""Uplink modular XL-MIMO with amplify-and-forward wireless fronthaul under
hardware impairments: channel generation, distortion-aware SE evaluation and
joint UE-power / fronthaul-amplification optimisation."""

from .channel import (ChannelConfig, ChannelRealization, Geometry, LayoutConfig, SystemDims,
                      build_geometry, generate_realization, noise_power)
from .system import (Allocation, HardwareProfile, bi_svd_precoders, fixed_baseline_allocation,
                     spectral_efficiency)
from .wmmse import WmmseOptions, wmmse_optimize

__version__ = "0.1.0"
