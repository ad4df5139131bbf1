"""Radio-map estimation networks."""
from .blocks import (ASPP, Decoder, Encoder, ResidualBlock, build_cascaded_residual, build_pfeb_in,
                     build_pfeb_out, build_pfeb_outlite, build_residual_block)
from .model import (IN_PLAN, OUT_PLAN, PLANS, REDUCED_PLAN, VARIANTS, ChannelPlan, ModelSpec, R2Net, build_model,
                    count_macs, count_params, layer_records, parse_plan)

__all__ = [
    "ASPP", "Decoder", "Encoder", "ResidualBlock", "build_cascaded_residual", "build_pfeb_in", "build_pfeb_out",
    "build_pfeb_outlite", "build_residual_block", "IN_PLAN", "OUT_PLAN", "PLANS", "REDUCED_PLAN", "VARIANTS",
    "ChannelPlan", "ModelSpec", "R2Net", "build_model", "count_macs", "count_params", "layer_records", "parse_plan",
]
