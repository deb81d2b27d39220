"""Spatial group-wise gating over convolutional feature maps.

Thin wrapper around the compiled extension: per-group similarity attention
(forward and analytic backward), the closed-form parameter/multiply-add
counters, and the binary tensor container shared with the command line
tools.
"""

from ._sgelab import (
    DEFAULT_EPSILON,
    backward,
    count_flops,
    count_params,
    forward,
    read_tensor,
    write_tensor,
)

__all__ = [
    "DEFAULT_EPSILON",
    "backward",
    "count_flops",
    "count_params",
    "forward",
    "read_tensor",
    "write_tensor",
]
