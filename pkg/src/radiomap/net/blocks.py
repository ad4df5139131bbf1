"""Building blocks: bottleneck residual block, cascades, ASPP, the three
bottleneck feature blocks and the skip-connected decoder."""
from __future__ import annotations

from ..tensor import ops
from ..tensor.nn import (BatchNorm2d, Conv2d, ConvBNReLU, Dropout, MaxPool2d, Module, Sequential,
                         TConvBNReLU, Upsample2x)
from ..tensor.random import RandomStream

DROPOUT_P = 0.3
ASPP_RATES = (6, 12, 18)


def bottleneck_width(c_out: int) -> int:
    return max(1, c_out // 4)


class ResidualBlock(Module):
    """ReLU(bottleneck(x) + shortcut(x)); bottleneck is 1x1 -> 3x3 -> 1x1, each followed by BN."""

    def __init__(self, c_in: int, c_out: int, rng: RandomStream, mid: int | None = None):
        super().__init__()
        mid = bottleneck_width(c_out) if mid is None else mid
        if mid >= c_out and c_out > 1:
            raise ValueError(f"bottleneck width {mid} must be below output width {c_out}")
        self.c_in, self.c_mid, self.c_out = c_in, mid, c_out
        self.body = Sequential(
            ConvBNReLU(c_in, mid, 1, rng),
            ConvBNReLU(mid, mid, 3, rng),
            ConvBNReLU(mid, c_out, 1, rng, relu=False),
        )
        self.projection = c_in != c_out
        self.shortcut = Sequential(Conv2d(c_in, c_out, 1, rng), BatchNorm2d(c_out)) if self.projection else None

    def forward(self, x):
        if x.shape[1] != self.c_in:
            raise ValueError(f"residual block expects {self.c_in} channels, got {x.shape}")
        skip = self.shortcut(x) if self.projection else x
        return ops.relu(ops.add(self.body(x), skip))

    def trace(self, shape, records, prefix=""):
        out = self.body.trace(shape, records, prefix + "body.")
        if self.projection:
            self.shortcut.trace(shape, records, prefix + "shortcut.")
        return out


def build_residual_block(c_in: int, c_out: int, rng: RandomStream, mid: int | None = None) -> ResidualBlock:
    return ResidualBlock(c_in, c_out, rng, mid)


def build_cascaded_residual(n: int, c_in: int, c_out: int, rng: RandomStream) -> Sequential:
    """n residual blocks in a row; only the first changes the channel count."""
    if n < 1:
        raise ValueError(f"cascade needs at least one block, got {n}")
    return Sequential(*[ResidualBlock(c_in if i == 0 else c_out, c_out, rng) for i in range(n)])


class PlainStage(Sequential):
    """Two 3x3 conv+BN+ReLU layers: the encoder stage of the ablation baseline."""

    def __init__(self, c_in, c_out, rng):
        super().__init__(ConvBNReLU(c_in, c_out, 3, rng), ConvBNReLU(c_out, c_out, 3, rng))


class _PooledBranch(Module):
    def __init__(self, c_in, c_out, rng):
        super().__init__()
        # no BN here: a 1x1 map with batch size 1 has zero variance
        self.conv = Conv2d(c_in, c_out, 1, rng)

    def forward(self, x):
        h, w = x.shape[2:]
        return ops.expand_spatial(ops.relu(self.conv(ops.global_avg_pool(x))), h, w)

    def trace(self, shape, records, prefix=""):
        n, _, h, w = shape
        out = self.conv.trace((n, shape[1], 1, 1), records, prefix + "conv.")
        return (n, out[1], h, w)


class ASPP(Module):
    """1x1 branch, three dilated 3x3 branches and a pooled branch, fused by 1x1."""

    def __init__(self, c_in: int, c_out: int, rng: RandomStream, rates=ASPP_RATES):
        super().__init__()
        self.c_out = c_out
        self.branches = Sequential(
            ConvBNReLU(c_in, c_out, 1, rng),
            *[ConvBNReLU(c_in, c_out, 3, rng, dilation=r) for r in rates],
            _PooledBranch(c_in, c_out, rng),
        )
        self.fuse = ConvBNReLU(c_out * len(self.branches), c_out, 1, rng)

    @property
    def n_branches(self) -> int:
        return len(self.branches)

    def forward(self, x):
        outs = [b(x) for b in self.branches]
        cat = outs[0]
        for o in outs[1:]:
            cat = ops.concat_channels(cat, o)
        return self.fuse(cat)

    def trace(self, shape, records, prefix=""):
        outs = [b.trace(shape, records, f"{prefix}branches.{i}.") for i, b in enumerate(self.branches)]
        if len({o[2:] for o in outs}) != 1:
            raise ValueError(f"ASPP branches disagree on extent: {outs}")
        cat = (shape[0], sum(o[1] for o in outs), *outs[0][2:])
        return self.fuse.trace(cat, records, prefix + "fuse.")


# ---------------------------------------------------------------- bottleneck feature blocks

def build_pfeb_in(c4: int, rng: RandomStream, dropout: bool = True) -> Sequential:
    """Dropout pyramid at 16, 8 and 4 pixels, widening 1x/2x/4x on the way down.

    With ``dropout=False`` the same layers run without the dropout layers
    (the ablation baseline).
    """
    def drop():
        return Dropout(DROPOUT_P) if dropout else None

    layers = [
        drop(), ConvBNReLU(c4, c4, 3, rng), MaxPool2d(),
        drop(), ConvBNReLU(c4, 2 * c4, 3, rng), MaxPool2d(),
        drop(), ConvBNReLU(2 * c4, 4 * c4, 3, rng),
        Upsample2x(), ConvBNReLU(4 * c4, 2 * c4, 3, rng),
        Upsample2x(), ConvBNReLU(2 * c4, c4, 3, rng),
    ]
    return Sequential(*[layer for layer in layers if layer is not None])


def build_pfeb_out(c4: int, c3: int, rng: RandomStream) -> Sequential:
    """Five residual blocks, ASPP, then a transposed conv that doubles the extent."""
    return Sequential(build_cascaded_residual(5, c4, c4, rng), ASPP(c4, c4, rng), TConvBNReLU(c4, c3, rng))


def build_pfeb_outlite(c4: int, rng: RandomStream) -> Sequential:
    return Sequential(build_cascaded_residual(2, c4, c4, rng), ASPP(c4, c4, rng), MaxPool2d(),
                      Dropout(DROPOUT_P), Upsample2x())


# ---------------------------------------------------------------- encoder / decoder

class Encoder(Module):
    """Stem conv, then four (stage -> skip -> 2x2 pool) steps."""

    def __init__(self, c_in: int, widths: tuple, rng: RandomStream, residual: bool = True):
        super().__init__()
        c1 = widths[0]
        self.stem = ConvBNReLU(c_in, c1, 3, rng)
        prev = c1
        stages = []
        for w in widths:
            stages.append(build_cascaded_residual(3, prev, w, rng) if residual else PlainStage(prev, w, rng))
            prev = w
        self.stages = Sequential(*stages)
        self.pool = MaxPool2d()

    def forward(self, x):
        x = self.stem(x)
        skips = []
        for stage in self.stages:
            x = stage(x)
            skips.append(x)
            x = self.pool(x)
        return x, skips

    def trace(self, shape, records, prefix=""):
        shape = self.stem.trace(shape, records, prefix + "stem.")
        skips = []
        for i, stage in enumerate(self.stages):
            shape = stage.trace(shape, records, f"{prefix}stages.{i}.")
            skips.append(shape)
            shape = self.pool.trace(shape, records)
        return shape, skips


def up_block(c_in: int, c_out: int, rng: RandomStream, style: str, kernel: int = 3) -> Sequential:
    """Doubles the extent: conv+BN+ReLU then nearest upsampling ("in"), or a 6x6 transposed conv ("out")."""
    if style == "in":
        return Sequential(ConvBNReLU(c_in, c_out, kernel, rng), Upsample2x())
    if style == "out":
        return TConvBNReLU(c_in, c_out, rng)
    raise ValueError(f"unknown up-block style {style!r}")


class Decoder(Module):
    """Skip-connected decoder from the 1/16 bottleneck back to full resolution.

    ``first_up=False`` skips the first upsampling when the bottleneck block already reached 1/8
    (the transposed conv closing the residual+ASPP block).
    """

    def __init__(self, plan, rng: RandomStream, style: str, first_up: bool = True):
        super().__init__()
        c1, c2, c3, c4, c5, c6 = plan.widths
        local_k = 3 if style == "in" else 5
        later_k = 5  # only used by "in"-style blocks
        self.up4 = up_block(c4, c3, rng, style, kernel=3) if first_up else None
        self.local = ConvBNReLU(c3, c3, local_k, rng)
        self.up3 = up_block(c3 + c4, c2, rng, style, kernel=later_k)
        self.up2 = up_block(c2 + c3, c1, rng, style, kernel=later_k)
        self.up1 = up_block(c1 + c2, c5, rng, style, kernel=later_k)
        self.head = Sequential(ConvBNReLU(c5 + c1, c6, 3, rng), Conv2d(c6, plan.c_out, 1, rng))

    def forward(self, x, skips):
        s1, s2, s3, s4 = skips
        if self.up4 is not None:
            x = self.up4(x)
        x = ops.concat_channels(self.local(x), s4)
        x = ops.concat_channels(self.up3(x), s3)
        x = ops.concat_channels(self.up2(x), s2)
        x = ops.concat_channels(self.up1(x), s1)
        return self.head(x)

    def trace(self, shape, records, prefix="", skips=()):
        s1, s2, s3, s4 = skips
        if self.up4 is not None:
            shape = self.up4.trace(shape, records, prefix + "up4.")
        shape = _cat(self.local.trace(shape, records, prefix + "local."), s4)
        shape = _cat(self.up3.trace(shape, records, prefix + "up3."), s3)
        shape = _cat(self.up2.trace(shape, records, prefix + "up2."), s2)
        shape = _cat(self.up1.trace(shape, records, prefix + "up1."), s1)
        return self.head.trace(shape, records, prefix + "head.")


def _cat(a: tuple, b: tuple) -> tuple:
    if a[0] != b[0] or a[2:] != b[2:]:
        raise ValueError(f"skip connection mismatch: decoder {a} vs encoder {b}")
    return (a[0], a[1] + b[1], *a[2:])


__all__ = [
    "ASPP", "DROPOUT_P", "Decoder", "Encoder", "PlainStage", "ResidualBlock",
    "build_cascaded_residual", "build_pfeb_in", "build_pfeb_out", "build_pfeb_outlite", "build_residual_block",
    "bottleneck_width", "up_block",
]
