"""Synthetic ultrasound phantom.

A virtual ellipsoidal organ sits below a fixed probe contact point. The
imaging plane is the probe frame's x-z plane rotated by the pose about
that contact point; depth runs down the image rows. Rendering adds
correlated speckle, depth attenuation, and a normal-force coupling term;
the quality oracle uses the same analytic geometry but never the pixels.
"""

from dataclasses import dataclass, field, replace
import zlib

import numpy as np
from scipy.ndimage import gaussian_filter

from . import quat
from .errors import ConfigError, InvalidStateError

CONFIG_VERSION = "phantom_v1"


@dataclass(frozen=True)
class ProbeState:
    """Probe orientation (unit quaternion, w >= 0) plus contact wrench.

    Wrench order: (Fx, Fy, Fz, Tx, Ty, Tz) in N and N*mm; Fz is the
    normal force pressing the probe into the skin.
    """

    pose: np.ndarray
    wrench: np.ndarray

    def __post_init__(self):
        pose = quat.check_unit(self.pose)
        pose = quat.canonicalize(pose)
        wrench = np.asarray(self.wrench, dtype=np.float64)
        if wrench.shape != (6,):
            raise InvalidStateError(f"wrench must have 6 components, got {wrench.shape}")
        if wrench[2] < 0:
            raise InvalidStateError(f"normal force Fz must be >= 0, got {wrench[2]}")
        object.__setattr__(self, "pose", pose)
        object.__setattr__(self, "wrench", wrench)

    @property
    def fz(self):
        return float(self.wrench[2])


@dataclass(frozen=True)
class PhantomConfig:
    organ_center: tuple = (0.0, 0.0, 25.0)   # mm, +z is depth
    organ_radii: tuple = (14.0, 12.0, 9.0)   # mm
    speckle_mean: float = 0.25
    speckle_variance: float = 0.0064
    speckle_corr_px: float = 1.5
    attenuation_coeff: float = 0.008         # per mm
    image_size: tuple = (64, 64, 1)          # H, W, C
    mm_per_pixel: float = 1.0
    f_min: float = 2.0                       # N, coupling threshold
    f_nominal: float = 8.0
    f_max: float = 15.0
    deform_gain: float = 0.5                 # mm of depth compression per N
    organ_brightness: float = 0.5
    area_frac_min: float = 0.05
    area_frac_max: float = 0.35
    centroid_offset_max: float = 0.2         # fraction of image width
    tilt_max: float = 0.5                    # rad
    version: str = field(default=CONFIG_VERSION)

    def __post_init__(self):
        if any(r <= 0 for r in self.organ_radii):
            raise ConfigError("organ radii must be positive")
        if not (0 <= self.f_min < self.f_nominal < self.f_max):
            raise ConfigError("need 0 <= f_min < f_nominal < f_max")
        h, w, c = self.image_size
        if h < 16 or w < 16 or c < 1:
            raise ConfigError("image size must be at least 16x16x1")
        if not (0 < self.area_frac_min < self.area_frac_max < 1):
            raise ConfigError("area fractions must satisfy 0 < min < max < 1")
        if self.version != CONFIG_VERSION:
            raise ConfigError(f"unsupported phantom config version {self.version!r}")


@dataclass(frozen=True)
class UltrasoundFrame:
    pixels: np.ndarray  # (H, W, C) float32 in [0, 1]
    render_seed: int


def canonical_good_state(config: PhantomConfig) -> ProbeState:
    """Identity pose at nominal coupling force."""
    return ProbeState(quat.IDENTITY.copy(),
                      np.array([0.0, 0.0, config.f_nominal, 0.0, 0.0, 0.0]))


def _organ_mask(pose, fz, config):
    """Boolean (H, W) organ cross-section on the imaging plane."""
    h, w, _ = config.image_size
    rot = quat.to_matrix(pose)
    u = (np.arange(w) - (w - 1) / 2.0) * config.mm_per_pixel
    v = np.arange(h) * config.mm_per_pixel
    # p(i, j) = u_j * lateral + v_i * axial
    px = rot[0, 0] * u[None, :] + rot[0, 2] * v[:, None]
    py = rot[1, 0] * u[None, :] + rot[1, 2] * v[:, None]
    pz = rot[2, 0] * u[None, :] + rot[2, 2] * v[:, None]
    cx, cy, cz = config.organ_center
    rx, ry, rz = config.organ_radii
    squeeze = config.deform_gain * max(fz - config.f_nominal, 0.0)
    rz_eff = max(rz - squeeze, 1.0)
    d2 = ((px - cx) / rx) ** 2 + ((py - cy) / ry) ** 2 + ((pz - cz) / rz_eff) ** 2
    return d2 <= 1.0


def _tilt(pose):
    rot = quat.to_matrix(pose)
    return float(np.arccos(np.clip(rot[2, 2], -1.0, 1.0)))


def _centroid_offset(mask, config):
    h, w, _ = config.image_size
    if not mask.any():
        return np.inf
    ii, jj = np.nonzero(mask)
    ci, cj = ii.mean(), jj.mean()
    return float(np.hypot(ci - (h - 1) / 2.0, cj - (w - 1) / 2.0) / w)


def _coupling(fz, config):
    return 1.0 if fz >= config.f_min else fz / config.f_min


def _window_ramp(x, lo, hi, margin):
    """In-window values land in [0.9, 1.0]; outside decays below 0.41.

    The product of four in-window ramps (>= 0.9^4 ~ 0.656) therefore
    always beats any single out-of-window factor (<= 0.4).
    """
    if lo <= x <= hi:
        mid = 0.5 * (lo + hi)
        half = max(0.5 * (hi - lo), 1e-9)
        return 0.9 + 0.1 * (1.0 - abs(x - mid) / half)
    d = (lo - x) if x < lo else (x - hi)
    return 0.4 * np.exp(-d / margin)


def oracle_quality(state: ProbeState, config: PhantomConfig) -> dict:
    """Ground-truth label and smooth score; geometry + wrench only."""
    mask = _organ_mask(state.pose, state.fz, config)
    area = float(mask.mean())
    offset = _centroid_offset(mask, config)
    tilt = _tilt(state.pose)
    fz = state.fz

    in_area = config.area_frac_min <= area <= config.area_frac_max
    in_offset = offset <= config.centroid_offset_max
    in_tilt = tilt <= config.tilt_max
    in_force = config.f_min <= fz <= config.f_max
    label = int(in_area and in_offset and in_tilt and in_force)

    offset_finite = offset if np.isfinite(offset) else 10.0
    score = (
        _window_ramp(area, config.area_frac_min, config.area_frac_max, 0.1)
        * _window_ramp(offset_finite, 0.0, config.centroid_offset_max, 0.2)
        * _window_ramp(tilt, 0.0, config.tilt_max, 0.5)
        * _window_ramp(fz, config.f_min, config.f_max, 4.0)
    )
    return {
        "label": label,
        "score": float(score),
        "area_fraction": area,
        "centroid_offset": offset,
        "tilt": tilt,
        "fz": fz,
    }


def _speckle_field(shape, seed, wrench, config):
    """Correlated noise; in-plane forces and torques only perturb the seed."""
    nuisance = np.round(np.asarray(wrench)[[0, 1, 3, 4, 5]] * 10.0).astype(np.int64)
    mix = zlib.crc32(nuisance.tobytes())
    rng = np.random.default_rng([int(seed) & 0xFFFFFFFF, mix])
    noise = rng.standard_normal(shape)
    smooth = gaussian_filter(noise, sigma=config.speckle_corr_px)
    smooth = (smooth - smooth.mean()) / max(smooth.std(), 1e-12)
    return config.speckle_mean + np.sqrt(config.speckle_variance) * smooth


def render(state: ProbeState, config: PhantomConfig, seed: int) -> UltrasoundFrame:
    """Deterministic B-mode-style image for a probe state."""
    h, w, c = config.image_size
    speckle = _speckle_field((h, w), seed, state.wrench, config)
    mask = _organ_mask(state.pose, state.fz, config)
    coupling = _coupling(state.fz, config)
    depth_mm = np.arange(h) * config.mm_per_pixel
    atten = np.exp(-config.attenuation_coeff * depth_mm)[:, None]
    img = atten * (speckle + coupling * config.organ_brightness * mask)
    img = np.clip(img, 0.0, 1.0).astype(np.float32)
    pixels = np.repeat(img[:, :, None], c, axis=2)
    return UltrasoundFrame(pixels=pixels, render_seed=int(seed))


# ---------------------------------------------------------------------------
# phantom_v1 config file: UTF-8 "key: value" lines, '#' comments.

_TUPLE_KEYS = {"organ_center", "organ_radii", "image_size"}


def save_config(config: PhantomConfig, path):
    text = config_to_text(config)
    with open(path, "w", encoding="utf-8") as f:
        f.write(text)
    return text


def config_to_text(config: PhantomConfig) -> str:
    lines = [f"version: {config.version}"]
    for key in PhantomConfig.__dataclass_fields__:
        if key == "version":
            continue
        value = getattr(config, key)
        if key in _TUPLE_KEYS:
            value = ", ".join(repr(v) for v in value)
        lines.append(f"{key}: {value}")
    return "\n".join(lines) + "\n"


def config_from_text(text: str) -> PhantomConfig:
    fields = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if ":" not in line:
            raise ConfigError(f"malformed phantom config line {raw!r}")
        key, value = (part.strip() for part in line.split(":", 1))
        if key == "version":
            if value != CONFIG_VERSION:
                raise ConfigError(f"unsupported phantom config version {value!r}")
            fields[key] = value
        elif key in _TUPLE_KEYS:
            parts = tuple(float(p) for p in value.split(","))
            if key == "image_size":
                parts = tuple(int(p) for p in parts)
            fields[key] = parts
        elif key in PhantomConfig.__dataclass_fields__:
            fields[key] = float(value)
        else:
            raise ConfigError(f"unknown phantom config key {key!r}")
    if "version" not in fields:
        raise ConfigError("phantom config missing version line")
    return PhantomConfig(**fields)


def load_config(path) -> PhantomConfig:
    with open(path, encoding="utf-8") as f:
        return config_from_text(f.read())


def with_image_size(config: PhantomConfig, h, w, c=1) -> PhantomConfig:
    """Resample to a new pixel grid, keeping the physical field of view.

    mm_per_pixel is rescaled so the imaged region (and hence the oracle
    geometry) is unchanged; only the resolution differs.
    """
    old_h = config.image_size[0]
    scale = config.mm_per_pixel * old_h / int(h)
    return replace(config, image_size=(int(h), int(w), int(c)),
                   mm_per_pixel=scale)
