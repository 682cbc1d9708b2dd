"""Pipeline configuration: defaults follow the reference acquisition setup
(full-HD 30 Hz video cropped by (300,300,200,0), physio at 128 Hz), with a
flat `key = value` file format and CLI override."""

from dataclasses import dataclass, fields, replace

from .dsp import PHYSIO_STFT, VIDEO_STFT, DEFAULT_FILTER_ORDER, StftSpec

SCALARIZATIONS = ("spherical_log_map", "green_chromaticity")


@dataclass(frozen=True)
class PipelineConfig:
    # crop margins applied to every frame before detection (pixels)
    crop_left: int = 300
    crop_right: int = 300
    crop_top: int = 200
    crop_bottom: int = 0

    # detection
    scale_factor: float = 1.1
    min_neighbors: int = 3
    min_size: int = 0

    # rate estimation bands (Hz) and filtering
    hr_low: float = 0.7
    hr_high: float = 2.5
    rr_low: float = 0.2
    rr_high: float = 0.5
    filter_order: int = DEFAULT_FILTER_ORDER

    # spectral estimation, video-rate and physio-rate regimes
    video_window: int = VIDEO_STFT.window_len
    video_hop: int = VIDEO_STFT.hop
    video_fft: int = VIDEO_STFT.fft_size
    physio_window: int = PHYSIO_STFT.window_len
    physio_hop: int = PHYSIO_STFT.hop
    physio_fft: int = PHYSIO_STFT.fft_size

    # pulse feature
    scalarization: str = "spherical_log_map"

    # ECG peak detection
    ecg_detrend_s: float = 0.5
    ecg_refractory_s: float = 0.25
    ecg_percentile: float = 95.0
    ecg_threshold_factor: float = 0.5

    def __post_init__(self):
        if self.scalarization not in SCALARIZATIONS:
            raise ValueError(f"scalarization must be one of {SCALARIZATIONS}, "
                             f"got {self.scalarization!r}")
        if not (0 < self.hr_low < self.hr_high):
            raise ValueError("need 0 < hr_low < hr_high")
        if not (0 < self.rr_low < self.rr_high):
            raise ValueError("need 0 < rr_low < rr_high")

    @property
    def hr_band(self):
        return (self.hr_low, self.hr_high)

    @property
    def rr_band(self):
        return (self.rr_low, self.rr_high)

    @property
    def crop(self):
        return (self.crop_left, self.crop_right, self.crop_top, self.crop_bottom)

    @property
    def video_stft(self):
        return StftSpec(self.video_window, self.video_hop, self.video_fft)

    @property
    def physio_stft(self):
        return StftSpec(self.physio_window, self.physio_hop, self.physio_fft)


def _coerce(name, text, target_type):
    try:
        if target_type is int:
            return int(text)
        if target_type is float:
            return float(text)
        return text
    except ValueError:
        raise ValueError(f"config key {name}: cannot parse {text!r} as {target_type.__name__}") from None


def load_config(path, base=None):
    """Parse a flat `key = value` config file over a base PipelineConfig.

    Blank lines and '#' comments are ignored; unknown keys are errors.
    """
    cfg = base or PipelineConfig()
    # field annotations may be type objects or strings depending on how
    # annotations are evaluated; normalize to the type object
    by_name = {"int": int, "float": float, "str": str}
    known = {f.name: by_name.get(f.type, f.type) if isinstance(f.type, str) else f.type
             for f in fields(PipelineConfig)}
    updates = {}
    with open(path, "r", encoding="ascii") as f:
        for lineno, raw in enumerate(f, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected `key = value`")
            key, _, value = line.partition("=")
            key = key.strip()
            value = value.strip()
            if key not in known:
                raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
            updates[key] = _coerce(key, value, known[key])
    return replace(cfg, **updates)
