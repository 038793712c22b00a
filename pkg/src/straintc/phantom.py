"""Synthetic creep-strain phantom: a 2-D plane through a cylindrical sample
with a circular inclusion, each region following a single-exponential creep
curve.

Every pixel p carries parameters (eta_p, gamma_p, tau_p) and evolves as

    cumulative strain   s_p(t) = eta_p + gamma_p * exp(-t / tau_p)
    incremental strain  x_p[n] = -(gamma_p / tau_p) * exp(-n*T_s / tau_p) * T_s

for frames n = 1..N at sample time T_s.  The trailing T_s factor turns the
strain rate into a per-interval increment so the running sum of increments
approximates s(t) - s(0).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

__all__ = [
    "RegionParams",
    "PhantomSpec",
    "StrainStack",
    "preset",
    "PRESET_NAMES",
    "tau_map",
    "param_maps",
    "synth_incremental",
    "synth_cumulative",
    "frame_times",
    "inclusion_mask",
]


@dataclass(frozen=True)
class RegionParams:
    """Material and creep-curve parameters for one phantom region.

    young_modulus is in kPa, tau in seconds; eta and gamma are dimensionless
    strain (gamma is negative for a rising creep curve).
    """

    young_modulus: float
    poisson_ratio: float
    tau: float
    eta: float
    gamma: float

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if not 0 < self.poisson_ratio < 0.5:
            raise ValueError(f"poisson_ratio must lie in (0, 0.5), got {self.poisson_ratio}")
        if not self.young_modulus > 0:
            raise ValueError(f"young_modulus must be positive, got {self.young_modulus}")
        if self.eta + self.gamma < 0:
            raise ValueError("eta + gamma must be non-negative (strain magnitude at t=0)")


def _default_region(young_modulus, poisson_ratio, tau, applied_stress_kpa=1.0,
                    eta=None, gamma=None):
    """Region with eta/gamma defaulted from the small-strain elastic estimate
    eta = stress/E and gamma = -eta/2 unless given explicitly."""
    if eta is None:
        eta = applied_stress_kpa / young_modulus
    if gamma is None:
        gamma = -0.5 * eta
    return RegionParams(young_modulus, poisson_ratio, tau, eta, gamma)


@dataclass(frozen=True)
class PhantomSpec:
    """Geometry, timing and per-region parameters of the synthetic phantom.

    Defaults: a 4 cm x 4 cm imaging plane on a 128x128 grid, a centered
    0.75 cm inclusion, 300 frames at 0.5 s under a 1 kPa applied stress.
    """

    inclusion: RegionParams
    background: RegionParams
    width_px: int = 128
    height_px: int = 128
    field_width_m: float = 0.04
    field_height_m: float = 0.04
    inclusion_center: tuple[float, float] = (0.02, 0.02)
    inclusion_radius_m: float = 0.0075
    n_frames: int = 300
    sample_time_s: float = 0.5
    applied_stress_kpa: float = 1.0

    def __post_init__(self):
        if self.width_px < 1 or self.height_px < 1:
            raise ValueError("pixel dimensions must be positive")
        if self.n_frames < 3:
            raise ValueError(f"n_frames must be >= 3, got {self.n_frames}")
        if not self.sample_time_s > 0:
            raise ValueError("sample_time_s must be positive")
        if self.inclusion_radius_m < 0:
            raise ValueError("inclusion_radius_m must be non-negative")
        cx, cy = self.inclusion_center
        r = self.inclusion_radius_m
        if (cx - r < 0 or cx + r > self.field_width_m
                or cy - r < 0 or cy + r > self.field_height_m):
            raise ValueError("inclusion circle must lie fully inside the field")

    @property
    def duration_s(self):
        return self.n_frames * self.sample_time_s


# Per-region (E kPa, nu, tau s) for the three built-in samples; background is
# normal tissue, inclusion is the stiffer tumor region.
_PRESETS = {
    "A": ((49.17, 0.45, 4.66), (32.78, 0.47, 11.42)),
    "B": ((97.02, 0.45, 2.36), (32.78, 0.47, 11.42)),
    "C": ((63.90, 0.47, 2.26), (32.78, 0.49, 3.08)),
}

PRESET_NAMES = tuple(_PRESETS)


def preset(name, **overrides) -> PhantomSpec:
    """Build one of the named sample presets ("A", "B" or "C").

    Keyword overrides are applied on top of the preset (e.g. width_px=32 for
    a reduced-resolution phantom).
    """
    try:
        inc, bg = _PRESETS[name.upper()]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; expected one of {sorted(_PRESETS)}") from None
    stress = overrides.get("applied_stress_kpa", 1.0)
    spec = PhantomSpec(
        inclusion=_default_region(*inc, applied_stress_kpa=stress),
        background=_default_region(*bg, applied_stress_kpa=stress),
    )
    return replace(spec, **overrides) if overrides else spec


@dataclass
class StrainStack:
    """N temporal frames of H x W strain with uniform sampling time.

    kind is "incremental" (per-interval strain increments) or "cumulative"
    (running strain relative to the pre-compression state).  Frame index i
    (0-based) holds the sample at time (i + 1) * sample_time_s.
    """

    frames: np.ndarray
    sample_time_s: float
    kind: str

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 3:
            raise ValueError(f"frames must be N x H x W, got shape {self.frames.shape}")
        if self.kind not in ("incremental", "cumulative"):
            raise ValueError(f"kind must be 'incremental' or 'cumulative', got {self.kind!r}")
        if not self.sample_time_s > 0:
            raise ValueError("sample_time_s must be positive")
        if not np.all(np.isfinite(self.frames)):
            raise ValueError("strain values must be finite")

    @property
    def n_frames(self):
        return self.frames.shape[0]

    @property
    def shape(self):
        return self.frames.shape


def frame_times(n_frames, sample_time_s) -> np.ndarray:
    """Acquisition times (n * T_s for n = 1..N) of the stored frames."""
    return np.arange(1, n_frames + 1, dtype=np.float64) * sample_time_s


def inclusion_mask(spec: PhantomSpec) -> np.ndarray:
    """Boolean H x W mask of pixels whose centers fall strictly inside the
    inclusion circle (hard boundary, no blending)."""
    dx = spec.field_width_m / spec.width_px
    dy = spec.field_height_m / spec.height_px
    xs = (np.arange(spec.width_px) + 0.5) * dx
    ys = (np.arange(spec.height_px) + 0.5) * dy
    cx, cy = spec.inclusion_center
    d2 = (ys[:, None] - cy) ** 2 + (xs[None, :] - cx) ** 2
    return d2 < spec.inclusion_radius_m ** 2


def param_maps(spec: PhantomSpec):
    """Per-pixel (eta, gamma, tau) maps, each H x W."""
    inside = inclusion_mask(spec)
    inc, bg = spec.inclusion, spec.background
    eta = np.where(inside, inc.eta, bg.eta)
    gamma = np.where(inside, inc.gamma, bg.gamma)
    tau = np.where(inside, inc.tau, bg.tau)
    return eta, gamma, tau


def tau_map(spec: PhantomSpec) -> np.ndarray:
    """Ground-truth H x W map of the strain time constant in seconds."""
    return param_maps(spec)[2]


def synth_incremental(spec: PhantomSpec) -> StrainStack:
    """Clean incremental strain stack.

    Frame n holds -(gamma/tau) * exp(-n*T_s/tau) * T_s per pixel, i.e. the
    creep strain rate at t = n*T_s times the frame interval.
    """
    eta, gamma, tau = param_maps(spec)
    t = frame_times(spec.n_frames, spec.sample_time_s)
    decay = np.exp(-t[:, None, None] / tau[None])
    frames = -(gamma[None] / tau[None]) * decay * spec.sample_time_s
    return StrainStack(frames, spec.sample_time_s, "incremental")


def synth_cumulative(spec: PhantomSpec) -> StrainStack:
    """Clean cumulative strain stack, evaluated in closed form.

    Frame n holds eta + gamma * exp(-n*T_s/tau) per pixel; this is the
    fitting ground truth, not a running sum of increments.
    """
    eta, gamma, tau = param_maps(spec)
    t = frame_times(spec.n_frames, spec.sample_time_s)
    frames = eta[None] + gamma[None] * np.exp(-t[:, None, None] / tau[None])
    return StrainStack(frames, spec.sample_time_s, "cumulative")


# ---------------------------------------------------------------------------
# plain-text config files: one "key = value" per line, # comments allowed.
# Region fields use dotted keys (inclusion.tau = 4.66); inclusion_center is
# two comma-separated meters.  eta/gamma may be omitted and default from the
# applied stress.

_SPEC_FLOAT_KEYS = ("field_width_m", "field_height_m", "inclusion_radius_m",
                    "sample_time_s", "applied_stress_kpa")
_SPEC_INT_KEYS = ("width_px", "height_px", "n_frames")
_REGION_KEYS = ("young_modulus", "poisson_ratio", "tau", "eta", "gamma")


def spec_from_config_text(text: str) -> PhantomSpec:
    """Parse a PhantomSpec from key = value text (see module docstring)."""
    entries = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in entries:
            raise ValueError(f"config line {lineno}: duplicate key {key!r}")
        entries[key] = value

    if "preset" in entries:
        name = entries.pop("preset")
        if entries:
            raise ValueError("a preset config must not set other keys; use CLI overrides")
        return preset(name)

    kwargs = {}
    for key in _SPEC_FLOAT_KEYS:
        if key in entries:
            kwargs[key] = float(entries.pop(key))
    for key in _SPEC_INT_KEYS:
        if key in entries:
            kwargs[key] = int(entries.pop(key))
    if "inclusion_center" in entries:
        parts = entries.pop("inclusion_center").split(",")
        if len(parts) != 2:
            raise ValueError("inclusion_center must be 'x_m, y_m'")
        kwargs["inclusion_center"] = (float(parts[0]), float(parts[1]))

    stress = kwargs.get("applied_stress_kpa", 1.0)
    regions = {}
    for region in ("inclusion", "background"):
        fields = {}
        for rkey in _REGION_KEYS:
            dotted = f"{region}.{rkey}"
            if dotted in entries:
                fields[rkey] = float(entries.pop(dotted))
        missing = {"young_modulus", "poisson_ratio", "tau"} - set(fields)
        if missing:
            raise ValueError(f"config missing {region} keys: {sorted(missing)}")
        regions[region] = _default_region(
            fields["young_modulus"], fields["poisson_ratio"], fields["tau"],
            applied_stress_kpa=stress,
            eta=fields.get("eta"), gamma=fields.get("gamma"))

    if entries:
        raise ValueError(f"unknown config keys: {sorted(entries)}")
    return PhantomSpec(inclusion=regions["inclusion"], background=regions["background"], **kwargs)


def spec_from_config_file(path) -> PhantomSpec:
    with open(path, "r", encoding="utf-8") as fh:
        return spec_from_config_text(fh.read())


def spec_to_config_text(spec: PhantomSpec) -> str:
    """Serialize a PhantomSpec so spec_from_config_text round-trips it."""
    lines = []
    for key in _SPEC_INT_KEYS:
        lines.append(f"{key} = {getattr(spec, key)}")
    for key in _SPEC_FLOAT_KEYS:
        lines.append(f"{key} = {getattr(spec, key)!r}")
    cx, cy = spec.inclusion_center
    lines.append(f"inclusion_center = {cx!r}, {cy!r}")
    for region in ("inclusion", "background"):
        params = getattr(spec, region)
        for rkey in _REGION_KEYS:
            lines.append(f"{region}.{rkey} = {getattr(params, rkey)!r}")
    return "\n".join(lines) + "\n"
