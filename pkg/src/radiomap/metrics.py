"""Accuracy and cost metrics for estimated radio maps.

Arrays are batched along axis 0 (one sample per radio map, any trailing
shape). Squared-norm conventions:

* ``mse``: per-sample squared L2 norm of the error, averaged over samples.
* ``mse_per_element``: the same divided by the number of elements per sample.
* ``psnr`` uses the per-element error, so MAX = 1 means "full scale per pixel".
"""
from __future__ import annotations

import json
import math
import time
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

K1, K2, DYNAMIC_RANGE = 0.01, 0.03, 1.0
M2_PER_KM2 = 1e6


def _pair(estimates, targets):
    e = np.asarray(estimates, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    if e.shape != t.shape:
        raise ValueError(f"estimate shape {e.shape} does not match target shape {t.shape}")
    if e.ndim < 2:
        raise ValueError(f"expected a batch of samples, got shape {e.shape}")
    return e.reshape(len(e), -1), t.reshape(len(t), -1)


def squared_error_norms(estimates, targets) -> np.ndarray:
    e, t = _pair(estimates, targets)
    return ((e - t) ** 2).sum(axis=1)


def mse(estimates, targets) -> float:
    return float(squared_error_norms(estimates, targets).mean())


def mse_per_element(estimates, targets) -> float:
    e, _ = _pair(estimates, targets)
    return float(squared_error_norms(estimates, targets).mean() / e.shape[1])


def rmse(estimates, targets) -> float:
    return math.sqrt(mse(estimates, targets))


def per_sample_nmse(estimates, targets) -> np.ndarray:
    """||e - t||^2 / ||t||^2 per sample; NaN where the target norm is zero."""
    e, t = _pair(estimates, targets)
    num = ((e - t) ** 2).sum(axis=1)
    den = (t ** 2).sum(axis=1)
    out = np.full(len(e), np.nan)
    ok = den > 0
    out[ok] = num[ok] / den[ok]
    if not ok.all():
        warnings.warn(f"NMSE undefined for {int((~ok).sum())} zero-norm target(s); excluded", RuntimeWarning,
                      stacklevel=2)
    return out


def nmse(estimates, targets) -> float:
    vals = per_sample_nmse(estimates, targets)
    vals = vals[~np.isnan(vals)]
    if vals.size == 0:
        raise ValueError("NMSE undefined: every target has zero norm")
    return float(vals.mean())


def ssim_global(x, y, k1=K1, k2=K2, dynamic_range=DYNAMIC_RANGE) -> float:
    """Structural similarity from whole-image moments (no sliding window)."""
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise ValueError(f"shapes differ: {x.shape} vs {y.shape}")
    c1, c2 = (k1 * dynamic_range) ** 2, (k2 * dynamic_range) ** 2
    mx, my = x.mean(), y.mean()
    dx, dy = x - mx, y - my
    vx, vy, cov = (dx * dx).mean(), (dy * dy).mean(), (dx * dy).mean()
    if np.array_equal(x, y):
        return 1.0
    return float((2 * mx * my + c1) * (2 * cov + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2)))


def per_sample_ssim(estimates, targets, **kw) -> np.ndarray:
    e, t = _pair(estimates, targets)
    return np.array([ssim_global(a, b, **kw) for a, b in zip(e, t)])


def ssim(estimates, targets, **kw) -> float:
    return float(per_sample_ssim(estimates, targets, **kw).mean())


def per_sample_psnr(estimates, targets, max_value=1.0) -> np.ndarray:
    """10 log10(MAX^2 / per-element MSE); inf for an exact match."""
    e, _ = _pair(estimates, targets)
    d = squared_error_norms(estimates, targets) / e.shape[1]
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(max_value ** 2 / d)


def psnr(estimates, targets, max_value=1.0) -> float:
    vals = per_sample_psnr(estimates, targets, max_value)
    finite = np.isfinite(vals)
    if not finite.all():
        warnings.warn(f"{int((~finite).sum())} zero-error sample(s) excluded from PSNR", RuntimeWarning, stacklevel=2)
    if not finite.any():
        return math.inf
    return float(vals[finite].mean())


@dataclass
class NmseSummary:
    min: float
    max: float
    mean: float
    ci95: tuple  # empirical 2.5th / 97.5th percentiles


def nmse_summary(per_sample) -> NmseSummary:
    v = np.array([np.nan if x is None else x for x in per_sample], dtype=np.float64)
    v = v[~np.isnan(v)]
    if v.size == 0:
        raise ValueError("empty NMSE list")
    lo, hi = np.percentile(v, [2.5, 97.5])
    return NmseSummary(float(v.min()), float(v.max()), float(v.mean()), (float(lo), float(hi)))


def measure_throughput(model, input_shape, repeats: int = 3, warmup: int = 1, seed: int = 0) -> float:
    """Radio maps per second over ``repeats`` eval-mode forwards (batch size counts)."""
    from .tensor import Tensor, no_grad

    if repeats < 1:
        raise ValueError("repeats must be at least 1")
    x = Tensor(np.random.default_rng(seed).random(input_shape))
    was_training = model.training
    model.eval()
    try:
        with no_grad():
            for _ in range(warmup):
                model(x)
            start = time.perf_counter()
            for _ in range(repeats):
                model(x)
            elapsed = time.perf_counter() - start
    finally:
        model.train(was_training)
    return repeats * input_shape[0] / elapsed


def inference_time_per_km2(throughput: float, map_area_m2: float) -> float:
    if throughput <= 0 or map_area_m2 <= 0:
        raise ValueError("throughput and map area must be positive")
    return (M2_PER_KM2 / map_area_m2) / throughput


@dataclass
class EvalReport:
    per_sample_nmse: list
    nmse: float
    rmse: float
    ssim: float
    psnr: float | None  # None when every sample matches exactly
    nmse_min: float
    nmse_max: float
    nmse_mean: float
    nmse_ci95: list
    params: int | None = None
    macs: int | None = None
    throughput: float | None = None
    time_per_km2: float | None = None
    model: str = ""
    conventions: dict = field(default_factory=lambda: {
        "rmse": "sqrt of per-sample squared L2 error norm averaged over samples",
        "psnr": "per-sample 10log10(MAX^2 / per-element MSE), MAX = 1, averaged",
        "ssim": "global image moments, k1 = 0.01, k2 = 0.03, L = 1",
        "nmse_ci95": "empirical 2.5 / 97.5 percentiles of per-sample NMSE",
    })

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        return cls(**json.loads(text))

    def to_table(self) -> str:
        cols = [
            ("Model", self.model or "-"),
            ("Params", "-" if self.params is None else f"{self.params / 1e6:.2f}M"),
            ("MACs", "-" if self.macs is None else f"{self.macs / 1e9:.2f}G"),
            ("NMSE", f"{self.nmse:.4f}"),
            ("RMSE", f"{self.rmse:.4f}"),
            ("SSIM", f"{self.ssim:.4f}"),
            ("PSNR(dB)", "inf" if self.psnr is None else f"{self.psnr:.2f}"),
            ("Maps/s", "-" if self.throughput is None else f"{self.throughput:.3f}"),
            ("s/km2", "-" if self.time_per_km2 is None else f"{self.time_per_km2:.2f}"),
        ]
        widths = [max(len(h), len(v)) for h, v in cols]
        head = "  ".join(h.rjust(w) for (h, _), w in zip(cols, widths))
        row = "  ".join(v.rjust(w) for (_, v), w in zip(cols, widths))
        s = nmse_summary(self.per_sample_nmse)
        extra = (f"NMSE min {s.min:.4f}  max {s.max:.4f}  mean {s.mean:.4f}  "
                 f"95% interval [{s.ci95[0]:.4f}, {s.ci95[1]:.4f}]")
        return f"{head}\n{row}\n{extra}\n"


def evaluate(estimates, targets, **extra) -> EvalReport:
    per = per_sample_nmse(estimates, targets)
    summary = nmse_summary(per)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        p = psnr(estimates, targets)
    return EvalReport(
        per_sample_nmse=[None if np.isnan(v) else float(v) for v in per],
        nmse=summary.mean, rmse=rmse(estimates, targets), ssim=ssim(estimates, targets),
        psnr=p if math.isfinite(p) else None,
        nmse_min=summary.min, nmse_max=summary.max, nmse_mean=summary.mean, nmse_ci95=list(summary.ci95),
        **extra)
