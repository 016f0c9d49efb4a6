"""
Time profiles for loads and PV: sampled series, CSV ingestion and a small seeded synthetic generator.
"""
import logging
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Optional, Sequence, Union

import numpy as np
import pandas as pd

from P2PVC.utilities.exceptions import EmptyProfile, InvalidScenario, SchemaMismatch, ValidationError

logger = logging.getLogger(__name__)

LINEAR = "linear"
STEP = "step"
INTERPOLATIONS = (LINEAR, STEP)

WATTS = "W"
PER_UNIT = "pu"
UNITS = (WATTS, PER_UNIT)

# relative tolerance when deciding whether end_s already lies on the synthetic sample grid
GRID_SLACK = 1e-9


@dataclass(frozen=True, eq=False)
class Profile:
    """
    Sampled time series.

    Parameters:
    - times (np.ndarray): Strictly increasing sample times (s).
    - values (np.ndarray): Sample values.
    - interpolation (str): 'linear' or 'step'.
    - unit (str): 'W' or 'pu'.
    """
    times: np.ndarray
    values: np.ndarray
    interpolation: str = LINEAR
    unit: str = WATTS

    def __post_init__(self) -> None:
        if self.interpolation not in INTERPOLATIONS:
            raise ValidationError(f"interpolation must be one of {INTERPOLATIONS}, got '{self.interpolation}'")
        if self.unit not in UNITS:
            raise ValidationError(f"unit must be one of {UNITS}, got '{self.unit}'")
        if self.times.shape != self.values.shape or self.times.ndim != 1:
            raise ValidationError("profile times and values must be 1-D arrays of equal length")
        if self.times.size and np.any(np.diff(self.times) <= 0):
            raise ValidationError("profile times must be strictly increasing")
        if self.interpolation == LINEAR and self.times.size == 1:
            raise ValidationError("linear profiles need at least two samples")

    @classmethod
    def from_samples(cls, samples: Sequence[Sequence[float]], interpolation: str = LINEAR,
                     unit: str = WATTS) -> "Profile":
        data = np.asarray(samples, dtype=float).reshape(-1, 2)
        return cls(data[:, 0].copy(), data[:, 1].copy(), interpolation, unit)

    def __len__(self) -> int:
        return int(self.times.size)


def interpolate_profile(profile: Profile, t: float) -> float:
    """
    Profile value at time ``t``; outside the sampled range the end values are held.

    Parameters:
    - profile (Profile): Sampled series.
    - t (float): Query time (s).

    Returns:
    - float: Interpolated value.
    """
    if not len(profile):
        raise EmptyProfile("profile has no samples")
    if profile.interpolation == LINEAR:
        return float(np.interp(t, profile.times, profile.values))
    index = int(np.searchsorted(profile.times, t, side="right")) - 1
    return float(profile.values[max(index, 0)])


def read_profile_csv(csv_file: Union[str, Path], interpolation: str = LINEAR, unit: str = WATTS) -> Profile:
    """
    Load a ``time_s,value`` CSV file.

    Parameters:
    - csv_file (Union[str, Path]): File with a header row.
    - interpolation (str): 'linear' or 'step'.
    - unit (str): 'W' or 'pu'.

    Returns:
    - Profile: Loaded series.
    """
    data = pd.read_csv(csv_file)
    if list(data.columns) != ["time_s", "value"]:
        raise SchemaMismatch(f"{csv_file}: expected columns time_s,value, got {','.join(map(str, data.columns))}")
    logger.debug(f"read {len(data)} samples from {csv_file}")
    return Profile(data["time_s"].to_numpy(dtype=float), data["value"].to_numpy(dtype=float), interpolation, unit)


def noise_rng(seed: int, profile_name: str, consumer: str) -> np.random.Generator:
    """
    Stream for the noise of one profile at one consumer; independent of every other (profile, consumer) pair.

    Parameters:
    - seed (int): Scenario seed.
    - profile_name (str): Name of the profile definition.
    - consumer (str): Name of the node or DER using it.

    Returns:
    - np.random.Generator: Seeded generator.
    """
    key = (zlib.crc32(profile_name.encode()), zlib.crc32(consumer.encode()))
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def constant(t: np.ndarray, value: float) -> np.ndarray:
    return np.full_like(t, value, dtype=float)


def ramp(t: np.ndarray, start_s: float, end_s: float, to: float, start_value: float = 0.0) -> np.ndarray:
    """Holds ``start_value`` before ``start_s``, moves linearly to ``to`` at ``end_s`` and holds it afterwards."""
    if end_s <= start_s:
        raise ValidationError(f"ramp end {end_s} must be after start {start_s}")
    return np.interp(t, [start_s, end_s], [start_value, to])


def square(t: np.ndarray, start_s: float, period_s: float, duty: float, amplitude: float,
           end_s: float = np.inf) -> np.ndarray:
    if period_s <= 0 or not 0 <= duty <= 1:
        raise ValidationError(f"square wave needs period > 0 and 0 <= duty <= 1 (period={period_s}, duty={duty})")
    phase = np.mod(t - start_s, period_s)
    on = (t >= start_s) & (t < end_s) & (phase < duty * period_s)
    return np.where(on, amplitude, 0.0)


def half_sine(t: np.ndarray, rise_s: float, set_s: float, peak: float) -> np.ndarray:
    """PV-like bell: zero outside [rise_s, set_s], a half sine wave of height ``peak`` inside."""
    if set_s <= rise_s:
        raise ValidationError(f"half_sine set {set_s} must be after rise {rise_s}")
    inside = (t >= rise_s) & (t <= set_s)
    return np.where(inside, peak * np.sin(np.pi * np.clip(t - rise_s, 0, None) / (set_s - rise_s)), 0.0)


def noise(t: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    return rng.normal(0.0, sigma, size=t.shape)


def synthesize_profile(components: Sequence[Mapping[str, Any]],
                       start_s: float,
                       end_s: float,
                       step_s: float,
                       interpolation: str = LINEAR,
                       unit: str = WATTS,
                       floor: Optional[float] = None,
                       ceiling: Optional[float] = None,
                       rng: Optional[np.random.Generator] = None) -> Profile:
    """
    Sum of primitive components sampled every ``step_s`` over [start_s, end_s].

    Parameters:
    - components (Sequence[Mapping[str, Any]]): Objects with a ``type`` key ('constant', 'ramp', 'square',
      'half_sine', 'noise') and the keyword arguments of the matching primitive.
    - start_s (float): First sample time (s).
    - end_s (float): Last sample time (s).
    - step_s (float): Sample spacing (s).
    - interpolation (str): 'linear' or 'step'.
    - unit (str): 'W' or 'pu'.
    - floor (Optional[float]): Lower clip of the summed values.
    - ceiling (Optional[float]): Upper clip of the summed values.
    - rng (Optional[np.random.Generator]): Stream for noise components.

    Returns:
    - Profile: Sampled synthetic profile.
    """
    if step_s <= 0 or end_s < start_s:
        raise InvalidScenario(f"bad synthetic grid start={start_s}, end={end_s}, step={step_s}")
    steps = np.floor((end_s - start_s) / step_s + GRID_SLACK)
    t = start_s + step_s * np.arange(steps + 1, dtype=float)
    if end_s - t[-1] > GRID_SLACK * step_s:
        t = np.append(t, end_s)
    else:
        t[-1] = end_s
    if t.size == 1 and interpolation == LINEAR:
        t = np.array([start_s, start_s + step_s])
    values = np.zeros_like(t)
    for component in components:
        arguments = dict(component)
        kind = arguments.pop("type", None)
        try:
            if kind == "constant":
                values += constant(t, **arguments)
            elif kind == "ramp":
                values += ramp(t, **arguments)
            elif kind == "square":
                values += square(t, **arguments)
            elif kind == "half_sine":
                values += half_sine(t, **arguments)
            elif kind == "noise":
                if rng is None:
                    raise InvalidScenario("noise component needs a seeded generator")
                values += noise(t, rng=rng, **arguments)
            else:
                raise InvalidScenario(f"unknown synthetic component type '{kind}'")
        except TypeError as error:
            raise InvalidScenario(f"bad arguments for '{kind}' component: {error}") from None
    if floor is not None or ceiling is not None:
        values = np.clip(values, floor, ceiling)
    return Profile(t, values, interpolation, unit)
