"""Lead-vehicle speed profiles, differentiation, spectra and the erratic-driver index."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

# Lead speed below which the acceleration index stops growing as 1/v.
DEFAULT_V_FLOOR = 5.0
DEFAULT_INDEX_WINDOW = 10.0


class ProfileSpec(BaseModel):
    """Trapezoidal lead profile, optionally with a sine riding on the cruise phase."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    cruise_speed: float = Field(15.0, gt=0)
    accel: float = Field(1.0, gt=0)
    decel: float = Field(1.0, gt=0)
    cruise_distance: float = Field(400.0, gt=0)
    erratic_amplitude: float = Field(0.0, ge=0)
    erratic_frequency: float = Field(0.0, ge=0)

    @model_validator(mode="after")
    def _amplitude_below_cruise(self) -> "ProfileSpec":
        if self.erratic_amplitude >= self.cruise_speed:
            raise ValueError("erratic_amplitude must be below cruise_speed")
        if self.erratic_amplitude > 0 and self.erratic_frequency <= 0:
            raise ValueError("erratic_frequency must be positive when erratic_amplitude > 0")
        return self

    @property
    def is_erratic(self) -> bool:
        return self.erratic_amplitude > 0


NORMAL_SPEC = ProfileSpec()
ERRATIC_SPEC = ProfileSpec(erratic_amplitude=2.0, erratic_frequency=0.3)


@dataclass(frozen=True)
class SpeedProfile:
    """Uniformly sampled speed trace.

    ``cruise`` holds the inclusive sample range of the cruise phase when the
    profile was generated from a :class:`ProfileSpec`; it is ``None`` for
    profiles loaded from files.
    """

    dt: float
    speeds: np.ndarray
    cruise: tuple[int, int] | None = field(default=None)

    def __post_init__(self) -> None:
        speeds = np.array(self.speeds, dtype=float)
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if speeds.ndim != 1 or speeds.size < 2:
            raise ValueError("a speed profile needs at least 2 samples")
        if not np.all(np.isfinite(speeds)):
            raise ValueError("speeds must be finite")
        if np.any(speeds < 0):
            raise ValueError("speeds must be non-negative")
        speeds.setflags(write=False)
        object.__setattr__(self, "speeds", speeds)

    def __len__(self) -> int:
        return self.speeds.size

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.speeds.size) * self.dt

    @property
    def duration(self) -> float:
        return (self.speeds.size - 1) * self.dt

    def distance(self) -> float:
        """Trapezoid-rule distance covered by the profile."""
        v = self.speeds
        return float(np.sum(v[1:] + v[:-1]) * 0.5 * self.dt)

    def positions(self, x0: float = 0.0) -> np.ndarray:
        v = self.speeds
        steps = (v[1:] + v[:-1]) * 0.5 * self.dt
        return x0 + np.concatenate(([0.0], np.cumsum(steps)))


@dataclass(frozen=True)
class Spectrum:
    freq_resolution: float
    magnitudes: np.ndarray

    def __post_init__(self) -> None:
        mags = np.array(self.magnitudes, dtype=float)
        if np.any(mags < 0):
            raise ValueError("magnitudes must be non-negative")
        mags.setflags(write=False)
        object.__setattr__(self, "magnitudes", mags)

    @property
    def frequencies(self) -> np.ndarray:
        return np.arange(self.magnitudes.size) * self.freq_resolution

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["freq_hz", "magnitude"])
            for f, m in zip(self.frequencies, self.magnitudes):
                writer.writerow([f"{f:.9g}", f"{m:.9g}"])


def generate_profile(spec: ProfileSpec, dt: float) -> SpeedProfile:
    """Sample the trapezoidal (and optionally erratic) lead profile at ``dt``."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    vc = spec.cruise_speed
    speeds = [0.0]
    n = 0
    while speeds[-1] < vc:
        n += 1
        speeds.append(min(vc, n * spec.accel * dt))

    c0 = len(speeds) - 1
    covered = 0.0
    k = 0
    omega = 2.0 * math.pi * spec.erratic_frequency
    # stop within half a step of the target so the phase length is unbiased
    while covered < spec.cruise_distance - 0.5 * vc * dt:
        k += 1
        v = vc + spec.erratic_amplitude * math.sin(omega * k * dt)
        covered += 0.5 * (speeds[-1] + v) * dt
        speeds.append(v)
    c1 = len(speeds) - 1

    v_end = speeds[-1]
    k = 0
    while speeds[-1] > 0.0:
        k += 1
        speeds.append(max(0.0, v_end - k * spec.decel * dt))
    return SpeedProfile(dt=dt, speeds=np.asarray(speeds), cruise=(c0, c1))


def load_speed_series(path: str | Path, dt: float | None = None) -> SpeedProfile:
    """Read a ``time_s,speed_mps`` CSV; sampling must be uniform."""
    path = Path(path)
    try:
        data = np.genfromtxt(path, delimiter=",", names=True, dtype=float)
    except OSError as exc:
        raise FileNotFoundError(f"{path}: {exc}") from exc
    if data.dtype.names is None or not {"time_s", "speed_mps"} <= set(data.dtype.names):
        raise ValueError(f"{path}: expected columns time_s,speed_mps")
    t = np.atleast_1d(data["time_s"])
    v = np.atleast_1d(data["speed_mps"])
    if t.size < 2:
        raise ValueError(f"{path}: need at least 2 samples")
    steps = np.diff(t)
    step = float(steps[0])
    if not np.allclose(steps, step, rtol=0, atol=1e-9):
        raise ValueError(f"{path}: time column is not uniformly sampled")
    if dt is not None and not math.isclose(step, dt, rel_tol=0, abs_tol=1e-9):
        raise ValueError(f"{path}: sample step {step} differs from scenario dt {dt}")
    return SpeedProfile(dt=dt if dt is not None else step, speeds=v)


def differentiate(profile: SpeedProfile) -> np.ndarray:
    """Central differences inside, one-sided differences at the two ends."""
    if len(profile) < 2:
        raise ValueError("need at least 2 samples to differentiate")
    return np.gradient(profile.speeds, profile.dt, edge_order=1)


def _next_pow2(n: int) -> int:
    return 1 << (n - 1).bit_length()


def _amplitude_spectrum(x: np.ndarray, dt: float) -> Spectrum:
    n = x.size
    if n < 8:
        raise ValueError("need at least 8 samples for a spectrum")
    x = x - x.mean()
    n_fft = _next_pow2(n)
    amps = np.abs(np.fft.rfft(x, n=n_fft)) / n
    amps[1:] *= 2.0
    if n_fft % 2 == 0:
        amps[-1] /= 2.0
    return Spectrum(freq_resolution=1.0 / (n_fft * dt), magnitudes=amps)


def magnitude_spectrum(profile: SpeedProfile) -> Spectrum:
    """Single-sided amplitude spectrum of the mean-removed speed signal.

    The signal is zero-padded to the next power of two; amplitudes are scaled
    by the original length so a sinusoid of amplitude A peaks near A.
    """
    return _amplitude_spectrum(profile.speeds, profile.dt)


def difference_spectrum(profile: SpeedProfile, reference: SpeedProfile) -> Spectrum:
    """Spectrum of ``profile - reference``.

    Subtracting a smooth reference (the normal trip) strips the ramp/cruise
    envelope, whose sidelobes otherwise dominate the low end of the spectrum.
    The shorter trace is extended with its final speed.
    """
    if not math.isclose(profile.dt, reference.dt, rel_tol=1e-12):
        raise ValueError("profiles must share dt")
    n = max(len(profile), len(reference))
    a = np.pad(profile.speeds, (0, n - len(profile)), mode="edge")
    b = np.pad(reference.speeds, (0, n - len(reference)), mode="edge")
    return _amplitude_spectrum(a - b, profile.dt)


def dominant_frequency(spectrum: Spectrum, min_freq: float) -> float:
    """Frequency of the largest bin at or above ``min_freq`` (lowest wins ties)."""
    if min_freq < spectrum.freq_resolution:
        raise ValueError("min_freq must be at least one frequency bin")
    start = int(math.ceil(min_freq / spectrum.freq_resolution - 1e-9))
    mags = spectrum.magnitudes[start:]
    if mags.size == 0:
        raise ValueError(f"no spectrum bin at or above {min_freq} Hz")
    if not np.any(mags > 0):
        raise ValueError("spectrum has no peak above min_freq")
    return (start + int(np.argmax(mags))) * spectrum.freq_resolution


def acceleration_index(accels, v_lead_now: float, v_floor: float = DEFAULT_V_FLOOR) -> float:
    """Sum of squared lead accelerations divided by the (floored) lead speed."""
    a = np.asarray(accels, dtype=float)
    if a.size == 0:
        raise ValueError("acceleration window is empty")
    return float(np.dot(a, a)) / max(v_lead_now, v_floor)


def index_series(
    profile: SpeedProfile,
    window: float = DEFAULT_INDEX_WINDOW,
    v_floor: float = DEFAULT_V_FLOOR,
) -> np.ndarray:
    """Rolling acceleration index at every sample (window truncated at the start)."""
    width = window_samples(window, profile.dt)
    sq = differentiate(profile) ** 2
    csum = np.concatenate(([0.0], np.cumsum(sq)))
    ends = np.arange(1, sq.size + 1)
    sums = csum[ends] - csum[np.maximum(ends - width, 0)]
    return sums / np.maximum(profile.speeds, v_floor)


def window_samples(window: float, dt: float) -> int:
    if not window > 0:
        raise ValueError("window must be positive")
    return max(1, int(round(window / dt)))
