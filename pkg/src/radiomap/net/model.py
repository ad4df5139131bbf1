"""Model family, channel plans, JSON model descriptions and capacity counting."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

from ..tensor import Tensor
from ..tensor.nn import LayerRecord, Module
from ..tensor.random import RandomStream
from .blocks import Decoder, Encoder, build_pfeb_in, build_pfeb_out, build_pfeb_outlite

VARIANTS = ("in", "out", "outlite")


@dataclass(frozen=True)
class ChannelPlan:
    c1: int
    c2: int
    c3: int
    c4: int
    c5: int
    c6: int
    c_in: int = 3
    c_out: int = 16

    def __post_init__(self):
        bad = {k: v for k, v in asdict(self).items() if not isinstance(v, int) or v < 1}
        if bad:
            raise ValueError(f"channel counts must be positive integers: {bad}")

    @property
    def widths(self) -> tuple:
        return (self.c1, self.c2, self.c3, self.c4, self.c5, self.c6)

    def with_io(self, c_in: int, c_out: int) -> "ChannelPlan":
        return ChannelPlan(*self.widths, c_in=c_in, c_out=c_out)


IN_PLAN = ChannelPlan(40, 60, 100, 150, 20, 20)
OUT_PLAN = ChannelPlan(64, 256, 512, 1024, 64, 32)
REDUCED_PLAN = ChannelPlan(8, 12, 16, 24, 8, 8)
PLANS = {"in": IN_PLAN, "out": OUT_PLAN, "reduced": REDUCED_PLAN}


def parse_plan(text: str, c_in: int = 3, c_out: int = 16) -> ChannelPlan:
    """A named plan ("in", "out", "reduced") or six comma-separated widths."""
    if text in PLANS:
        return PLANS[text].with_io(c_in, c_out)
    parts = [int(p) for p in text.split(",")]
    if len(parts) != 6:
        raise ValueError(f"plan needs six widths C1..C6, got {text!r}")
    return ChannelPlan(*parts, c_in=c_in, c_out=c_out)


@dataclass
class ModelSpec:
    variant: str = "in"
    plan: ChannelPlan = field(default_factory=lambda: IN_PLAN)
    resolution: int = 256
    ablation: bool = False  # plain conv encoder, no dropout in the bottleneck block

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.ablation and self.variant != "in":
            raise ValueError("the ablation baseline is defined for the 'in' variant only")
        check_resolution(self.resolution)

    def to_json(self) -> str:
        return json.dumps({"variant": self.variant, "plan": asdict(self.plan), "resolution": self.resolution,
                           "ablation": self.ablation}, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ModelSpec":
        d = json.loads(text)
        return cls(d["variant"], ChannelPlan(**d["plan"]), d["resolution"], d.get("ablation", False))


def check_resolution(h: int) -> None:
    if h < 64 or h & (h - 1):
        raise ValueError(f"resolution must be a power of two >= 64, got {h}")


class R2Net(Module):
    """Encoder -> bottleneck feature block -> skip-connected decoder."""

    def __init__(self, spec: ModelSpec, rng: RandomStream):
        super().__init__()
        self.spec = spec
        plan = spec.plan
        enc_widths = (plan.c1, plan.c2, plan.c3, plan.c4)
        self.encoder = Encoder(plan.c_in, enc_widths, rng, residual=not spec.ablation)
        if spec.variant == "in":
            self.pfeb = build_pfeb_in(plan.c4, rng, dropout=not spec.ablation)
            self.decoder = Decoder(plan, rng, style="in")
        elif spec.variant == "out":
            self.pfeb = build_pfeb_out(plan.c4, plan.c3, rng)
            self.decoder = Decoder(plan, rng, style="out", first_up=False)
        else:
            self.pfeb = build_pfeb_outlite(plan.c4, rng)
            self.decoder = Decoder(plan, rng, style="out")

    def forward(self, x: Tensor) -> Tensor:
        n, c, h, w = x.shape
        if c != self.spec.plan.c_in:
            raise ValueError(f"model expects {self.spec.plan.c_in} input channels, got {x.shape}")
        if h != w:
            raise ValueError(f"model expects square inputs, got {x.shape}")
        check_resolution(h)
        z, skips = self.encoder(x)
        return self.decoder(self.pfeb(z), skips)

    def trace(self, shape, records, prefix=""):
        z, skips = self.encoder.trace(shape, records, prefix + "encoder.")
        z = self.pfeb.trace(z, records, prefix + "pfeb.")
        return self.decoder.trace(z, records, prefix + "decoder.", skips=skips)


def build_model(spec: ModelSpec, seed: int = 0) -> R2Net:
    """Weights come from one init stream; dropout gets an independent stream."""
    model = R2Net(spec, RandomStream(seed))
    model.set_rng(RandomStream(seed).spawn(1))
    return model


def layer_records(model: R2Net, input_shape: tuple) -> list:
    records: list[LayerRecord] = []
    out = model.trace(tuple(input_shape), records)
    expect = (input_shape[0], model.spec.plan.c_out, *input_shape[2:])
    if out != expect:
        raise AssertionError(f"traced output {out} differs from expected {expect}")
    return records


def count_params(model: Module) -> int:
    return model.num_parameters()


def count_macs(model: R2Net, input_shape: tuple) -> int:
    return int(sum(r.macs for r in layer_records(model, input_shape)))
