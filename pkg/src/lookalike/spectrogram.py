"""Spectrogram data model, synthetic noise, narrowband signal injection,
and snippet extraction/normalization.

Conventions used throughout:
  * a spectrogram is a (n_time, n_freq) power matrix, time-major;
  * bin j sits at frequency f_start + j * df;
  * a snippet is a 16 x 256 window, log-scaled and min-max normalized to [0, 1].
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, InvalidShape, OutOfBand

SNIPPET_ROWS = 16
SNIPPET_BINS = 256
DEFAULT_DF_HZ = 2.79
DEFAULT_DT_S = 18.25

# Synthetic background: positive-shifted Gaussian so the log step needs no
# data-dependent offset.
NOISE_MEAN = 10.0
NOISE_STD = 1.0

_RSSG_MAGIC = b"RSSG"
_RSSG_VERSION = 1


@dataclass
class Spectrogram:
    """2-D power matrix with frequency/time axis metadata."""

    data: np.ndarray
    f_start: float = 0.0
    df: float = DEFAULT_DF_HZ
    dt: float = DEFAULT_DT_S

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2 or self.data.shape[0] < 1 or self.data.shape[1] < 1:
            raise InvalidShape(f"spectrogram must be 2-D and non-empty, got shape {self.data.shape}")
        if not (self.df > 0 and self.dt > 0):
            raise InvalidShape(f"df and dt must be positive, got df={self.df}, dt={self.dt}")
        if not np.isfinite(self.data).all():
            raise InvalidShape("spectrogram contains non-finite power values")

    @property
    def n_time(self) -> int:
        return self.data.shape[0]

    @property
    def n_freq(self) -> int:
        return self.data.shape[1]

    @property
    def f_end(self) -> float:
        """One-past-the-last bin frequency (half-open band)."""
        return self.f_start + self.n_freq * self.df

    def bin_freq(self, j) -> float:
        return self.f_start + np.asarray(j) * self.df


@dataclass
class SignalParams:
    """Narrowband track description.

    snr is the peak amplitude of the track in units of the background noise
    standard deviation (the common narrowband convention).
    """

    snr: float
    drift_rate: float  # Hz/s
    width: float  # Hz, full width at half maximum
    f_center: float = 0.0  # Hz at the first time row

    def __post_init__(self):
        if not self.width > 0:
            raise InvalidShape(f"width must be positive, got {self.width}")
        if not self.snr > 0:
            raise InvalidShape(f"snr must be positive, got {self.snr}")


@dataclass
class RawWindow:
    """Un-normalized 16 x 256 cut from a spectrogram."""

    data: np.ndarray
    start_bin: int
    center_freq: float
    source_id: str = ""


@dataclass
class Snippet:
    """Normalized 16 x 256 window; values in [0, 1].

    ``raw`` optionally keeps the pre-normalization window around for
    baselines that operate on unscaled power. ``degenerate`` marks
    constant-input windows that were mapped to all zeros.
    """

    data: np.ndarray
    source_id: str = ""
    start_bin: int = 0
    center_freq: float = 0.0
    degenerate: bool = False
    raw: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.shape != (SNIPPET_ROWS, SNIPPET_BINS):
            raise InvalidShape(f"snippet must be {SNIPPET_ROWS}x{SNIPPET_BINS}, got {self.data.shape}")


def gen_noise(n_time: int, n_freq: int, seed: int, f_start: float = 0.0,
              df: float = DEFAULT_DF_HZ, dt: float = DEFAULT_DT_S) -> Spectrogram:
    """I.i.d. Gaussian background with mean NOISE_MEAN and std NOISE_STD."""
    if n_time < 1 or n_freq < 1:
        raise InvalidShape(f"noise dimensions must be >= 1, got {n_time}x{n_freq}")
    rng = np.random.default_rng(seed)
    data = rng.normal(NOISE_MEAN, NOISE_STD, size=(n_time, n_freq))
    return Spectrogram(data, f_start=f_start, df=df, dt=dt)


def inject_signal(spec: Spectrogram, p: SignalParams, seed: int = 0,
                  noise_std: float = NOISE_STD) -> Spectrogram:
    """Add a linearly drifting narrowband track to a copy of ``spec``.

    At time row t the track center is f_center + drift_rate * t * dt; power
    p.snr * noise_std is added across a Gaussian profile with FWHM p.width.
    Rows whose center drifts out of the band keep whatever tail of the
    profile still overlaps it. The injection itself is deterministic; ``seed``
    is accepted for signature stability with stochastic signal models.
    """
    if not (spec.f_start <= p.f_center < spec.f_end):
        raise OutOfBand(
            f"f_center {p.f_center} Hz outside band [{spec.f_start}, {spec.f_end})"
        )
    t = np.arange(spec.n_time) * spec.dt
    centers = p.f_center + p.drift_rate * t  # (n_time,)
    freqs = spec.f_start + np.arange(spec.n_freq) * spec.df  # (n_freq,)
    # FWHM -> Gaussian sigma: fwhm = 2*sqrt(2 ln 2) * sigma
    sigma = p.width / (2.0 * np.sqrt(2.0 * np.log(2.0)))
    profile = p.snr * noise_std * np.exp(
        -0.5 * ((freqs[None, :] - centers[:, None]) / sigma) ** 2
    )
    return Spectrogram(spec.data + profile, f_start=spec.f_start, df=spec.df, dt=spec.dt)


def extract_snippets(spec: Spectrogram, stride_bins: int, source_id: str = "") -> list[RawWindow]:
    """Cut 16 x 256 raw windows at frequency offsets 0, stride, 2*stride, ...

    The first 16 time rows are used; a trailing window that would not fit in
    frequency is discarded.
    """
    if stride_bins < 1:
        raise InvalidShape(f"stride_bins must be >= 1, got {stride_bins}")
    if spec.n_freq < SNIPPET_BINS or spec.n_time < SNIPPET_ROWS:
        raise InvalidShape(
            f"spectrogram {spec.n_time}x{spec.n_freq} too small for "
            f"{SNIPPET_ROWS}x{SNIPPET_BINS} windows"
        )
    windows = []
    for start in range(0, spec.n_freq - SNIPPET_BINS + 1, stride_bins):
        data = spec.data[:SNIPPET_ROWS, start:start + SNIPPET_BINS].copy()
        center = spec.f_start + (start + SNIPPET_BINS // 2) * spec.df
        windows.append(RawWindow(data, start_bin=start, center_freq=center, source_id=source_id))
    return windows


def normalize_snippet(raw, *, source_id: str = "", start_bin: int = 0,
                      center_freq: float = 0.0) -> Snippet:
    """Log-scale then min-max normalize one window to [0, 1].

    Input values must be positive and finite (shift beforehand if needed;
    see ``shift_positive``). Constant inputs normalize to all zeros with the
    degenerate flag set rather than failing, since blanked channels occur in
    real pipelines.
    """
    if isinstance(raw, RawWindow):
        source_id, start_bin, center_freq = raw.source_id, raw.start_bin, raw.center_freq
        raw = raw.data
    x = np.asarray(raw, dtype=np.float64)
    if x.shape != (SNIPPET_ROWS, SNIPPET_BINS):
        raise InvalidShape(f"expected {SNIPPET_ROWS}x{SNIPPET_BINS} window, got {x.shape}")
    if not np.isfinite(x).all() or (x <= 0).any():
        raise InvalidShape("normalize_snippet requires finite, strictly positive input")
    y = np.log(x)
    y -= y.min()
    peak = y.max()
    if peak == 0.0:
        return Snippet(np.zeros_like(y), source_id=source_id, start_bin=start_bin,
                       center_freq=center_freq, degenerate=True, raw=x)
    y /= peak
    return Snippet(y, source_id=source_id, start_bin=start_bin,
                   center_freq=center_freq, raw=x)


def shift_positive(window: np.ndarray, floor: float = 1.0) -> np.ndarray:
    """Shift a window so its minimum equals ``floor`` when any value is <= 0."""
    window = np.asarray(window, dtype=np.float64)
    lo = window.min()
    if lo <= 0:
        return window - lo + floor
    return window


def snippets_from_spectrogram(spec: Spectrogram, stride_bins: int = SNIPPET_BINS,
                              source_id: str = "") -> list[Snippet]:
    """Extract, positivity-shift, and normalize all windows of a spectrogram."""
    out = []
    for w in extract_snippets(spec, stride_bins, source_id=source_id):
        out.append(normalize_snippet(shift_positive(w.data), source_id=w.source_id,
                                     start_bin=w.start_bin, center_freq=w.center_freq))
    return out


def write_rssg(path, spec: Spectrogram) -> None:
    """Write the little-endian RSSG spectrogram container."""
    header = _RSSG_MAGIC + struct.pack(
        "<HIQddd", _RSSG_VERSION, spec.n_time, spec.n_freq, spec.f_start, spec.df, spec.dt
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(spec.data, dtype="<f4").tobytes())


def read_rssg(path) -> Spectrogram:
    """Read an RSSG file; rejects wrong magic or version."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _RSSG_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}, expected {_RSSG_MAGIC!r}")
        head = fh.read(struct.calcsize("<HIQddd"))
        if len(head) != struct.calcsize("<HIQddd"):
            raise FormatError(f"{path}: truncated header")
        version, n_time, n_freq, f_start, df, dt = struct.unpack("<HIQddd", head)
        if version != _RSSG_VERSION:
            raise FormatError(f"{path}: unsupported RSSG version {version}")
        payload = fh.read(n_time * n_freq * 4)
        if len(payload) != n_time * n_freq * 4:
            raise FormatError(f"{path}: truncated payload")
    data = np.frombuffer(payload, dtype="<f4").reshape(n_time, n_freq)
    return Spectrogram(data, f_start=f_start, df=df, dt=dt)
