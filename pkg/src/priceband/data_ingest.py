"""Load, validate, clip, normalize, and featurize half-hourly market data.

Input CSV schema: ``timestamp,price,demand,temperature,irradiance,wind_speed,
gas_price,coal_price`` with ISO-8601 timestamps on a 30-minute grid. Days with
any missing half-hour are dropped and counted in the load report; prices are
clipped to [0, 500] A$/MWh before normalization. Timestamps are taken as
market-local time as written; half-hour index 0 is 00:00.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from datetime import date as date_type
from datetime import datetime, timedelta

import numpy as np

from .errors import (
    DegenerateRange,
    EmptyDataset,
    EmptyInput,
    MalformedRow,
    MissingChannel,
    NonMonotonicTimestamps,
)

HALF_HOURS_PER_DAY = 48

PRICE_CLIP_LO = 0.0
PRICE_CLIP_HI = 500.0

HDD_CDD_BASE_C = 18.0

DEFAULT_SCHEMA = {
    "timestamp": "timestamp",
    "price": "price",
    "demand": "demand",
    "temperature": "temperature",
    "irradiance": "irradiance",
    "wind_speed": "wind_speed",
    "gas_price": "gas_price",
    "coal_price": "coal_price",
}

_VALUE_CHANNELS = (
    "price",
    "demand",
    "temperature",
    "irradiance",
    "wind_speed",
    "gas_price",
    "coal_price",
)

# Channels whose min-max params are fitted from the loaded data. Price is
# normalized against the fixed clip bounds instead, so a spike at A$350/MWh
# always lands at 0.7 regardless of what the file happens to contain.
_FITTED_CHANNELS = (
    "demand",
    "temperature",
    "irradiance",
    "wind_speed",
    "gas_price",
    "coal_price",
)


@dataclass(frozen=True)
class MinMaxParams:
    """Bounds for the affine [0,1] rescaling of one channel."""

    p_min: float
    p_max: float

    def __post_init__(self):
        if not (self.p_max > self.p_min):
            raise DegenerateRange(f"p_max ({self.p_max}) must exceed p_min ({self.p_min})")


@dataclass(frozen=True)
class PriceSeries:
    """Half-hourly prices in A$/MWh on a strict 30-minute grid."""

    timestamps: tuple[datetime, ...]
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", vals)
        if len(self.timestamps) != vals.size:
            raise EmptyInput("timestamps and values must have equal length")
        _validate_grid(self.timestamps)


@dataclass(frozen=True)
class WeatherSeries:
    """Half-hourly weather observations sharing the price timestamp grid."""

    timestamps: tuple[datetime, ...]
    temperature: np.ndarray
    irradiance: np.ndarray
    wind_speed: np.ndarray

    def __post_init__(self):
        for name in ("temperature", "irradiance", "wind_speed"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            object.__setattr__(self, name, arr)
            if arr.size != len(self.timestamps):
                raise EmptyInput(f"{name} length does not match timestamps")
        if (self.irradiance < 0).any():
            raise EmptyInput("irradiance must be non-negative")
        if (self.wind_speed < 0).any():
            raise EmptyInput("wind_speed must be non-negative")
        _validate_grid(self.timestamps)


def _validate_grid(timestamps: tuple[datetime, ...]) -> None:
    step = timedelta(minutes=30)
    for prev, nxt in zip(timestamps, timestamps[1:]):
        if nxt <= prev:
            raise NonMonotonicTimestamps(f"{nxt} does not follow {prev}")
        if nxt - prev != step:
            raise NonMonotonicTimestamps(f"gap {nxt - prev} between {prev} and {nxt}")


@dataclass(frozen=True)
class DayRecord:
    """One complete day: 48 samples of every channel, prices already clipped."""

    day: date_type
    channels: dict[str, np.ndarray]

    def channel(self, name: str) -> np.ndarray:
        if name not in self.channels or self.channels[name] is None:
            raise MissingChannel(name)
        return self.channels[name]

    def price_series(self) -> PriceSeries:
        return PriceSeries(_day_grid(self.day), self.channel("price"))

    def weather_series(self) -> WeatherSeries:
        return WeatherSeries(
            _day_grid(self.day),
            self.channel("temperature"),
            self.channel("irradiance"),
            self.channel("wind_speed"),
        )


def _day_grid(day: date_type) -> tuple[datetime, ...]:
    start = datetime(day.year, day.month, day.day)
    return tuple(start + timedelta(minutes=30 * k) for k in range(HALF_HOURS_PER_DAY))


@dataclass(frozen=True)
class ConditionVector:
    """Per-day conditioning features for the generative model.

    One-hot blocks sum to exactly 1; every normalized entry lies in [0, 1];
    hdd/cdd are in degree-day units. ``as_array`` concatenates the blocks in
    field order, so the total dimensionality is constant across a dataset.
    """

    lagged_prices: np.ndarray
    lagged_demand: np.ndarray
    day_of_week: np.ndarray
    month: np.ndarray
    hdd: float
    cdd: float
    gas_price: float
    coal_price: float
    forecast_temperature: np.ndarray
    forecast_irradiance: np.ndarray
    forecast_wind: np.ndarray

    def __post_init__(self):
        for name in (
            "lagged_prices",
            "lagged_demand",
            "forecast_temperature",
            "forecast_irradiance",
            "forecast_wind",
        ):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            object.__setattr__(self, name, arr)
            if arr.shape != (HALF_HOURS_PER_DAY,):
                raise EmptyInput(f"{name} must have {HALF_HOURS_PER_DAY} entries")
            if (arr < 0).any() or (arr > 1).any():
                raise EmptyInput(f"{name} entries must lie in [0, 1]")
        for name, size in (("day_of_week", 7), ("month", 12)):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            object.__setattr__(self, name, arr)
            if arr.shape != (size,) or arr.sum() != 1.0 or not np.isin(arr, (0.0, 1.0)).all():
                raise EmptyInput(f"{name} must be a one-hot vector of length {size}")
        for name in ("gas_price", "coal_price"):
            val = float(getattr(self, name))
            if not 0.0 <= val <= 1.0:
                raise EmptyInput(f"{name} must lie in [0, 1]")

    def as_array(self) -> np.ndarray:
        return np.concatenate(
            [
                self.lagged_prices,
                self.lagged_demand,
                self.day_of_week,
                self.month,
                [self.hdd, self.cdd, self.gas_price, self.coal_price],
                self.forecast_temperature,
                self.forecast_irradiance,
                self.forecast_wind,
            ]
        )

    @property
    def dim(self) -> int:
        return self.as_array().size


CONDITION_DIM = 5 * HALF_HOURS_PER_DAY + 7 + 12 + 4


@dataclass(frozen=True)
class LoadReport:
    """Row and day accounting for one ingestion run."""

    rows_consumed: int
    days_loaded: int
    days_dropped: int
    dropped_days: tuple[str, ...]

    def to_json(self) -> str:
        return json.dumps(
            {
                "rows_consumed": self.rows_consumed,
                "days_loaded": self.days_loaded,
                "days_dropped": self.days_dropped,
                "dropped_days": list(self.dropped_days),
            },
            sort_keys=True,
        )


@dataclass(frozen=True)
class Dataset:
    """Complete days plus per-channel normalization params and supervised pairs.

    ``day_records`` keeps every complete source day; ``days`` holds the
    model-ready (condition, normalized 48-step price target) pairs, one per
    day that has a complete previous calendar day to lag against.
    """

    day_records: tuple[DayRecord, ...]
    norm: dict[str, MinMaxParams]
    report: LoadReport
    days: tuple[tuple[ConditionVector, np.ndarray], ...] = field(default=())

    @property
    def n_days(self) -> int:
        return len(self.day_records)

    def record_for(self, day: date_type) -> DayRecord:
        for rec in self.day_records:
            if rec.day == day:
                return rec
        raise EmptyDataset(f"no complete day {day.isoformat()} in dataset")

    def normalized_channel(self, rec: DayRecord, name: str) -> np.ndarray:
        return normalize(rec.channel(name), self.norm[name])


def clip_prices(series: PriceSeries, lo: float = PRICE_CLIP_LO, hi: float = PRICE_CLIP_HI) -> PriceSeries:
    """Clamp every price into [lo, hi]; a total function on valid series."""
    if not lo < hi:
        raise DegenerateRange(f"clip bounds must satisfy lo < hi, got ({lo}, {hi})")
    return PriceSeries(series.timestamps, np.clip(series.values, lo, hi))


def normalize(values: np.ndarray, params: MinMaxParams) -> np.ndarray:
    """Affine map (p - p_min)/(p_max - p_min); clipped inputs land in [0, 1]."""
    vals = np.asarray(values, dtype=np.float64)
    return (vals - params.p_min) / (params.p_max - params.p_min)


def denormalize(normalized: np.ndarray, params: MinMaxParams) -> np.ndarray:
    """Inverse of :func:`normalize`."""
    vals = np.asarray(normalized, dtype=np.float64)
    return vals * (params.p_max - params.p_min) + params.p_min


def compute_hdd_cdd(daily_temps, base: float = HDD_CDD_BASE_C) -> tuple[float, float]:
    """Daily-mean heating and cooling degree days against ``base`` (°C).

    hdd = max(0, base - mean(T)), cdd = max(0, mean(T) - base); at most one of
    the two is nonzero.
    """
    temps = np.asarray(daily_temps, dtype=np.float64)
    if temps.size == 0:
        raise EmptyInput("temperature list is empty")
    mean = float(temps.mean())
    return max(0.0, base - mean), max(0.0, mean - base)


def build_conditions(
    prev_day: DayRecord,
    day: DayRecord,
    norm: dict[str, MinMaxParams],
    hdd_base: float = HDD_CDD_BASE_C,
) -> ConditionVector:
    """Deterministic condition encoding for ``day`` given the previous day.

    Lags come from ``prev_day``; forecast weather channels come from ``day``
    itself (the ingested observations stand in for a day-ahead forecast). Fuel
    prices are the previous day's mean, so nothing from the target day other
    than weather forecasts enters the vector. Day-of-week one-hot has Monday
    at index 0; month one-hot has January at index 0.
    """
    clip01 = lambda a: np.clip(a, 0.0, 1.0)

    lagged_prices = clip01(normalize(prev_day.channel("price"), norm["price"]))
    lagged_demand = clip01(normalize(prev_day.channel("demand"), norm["demand"]))

    dow = np.zeros(7)
    dow[day.day.weekday()] = 1.0
    month = np.zeros(12)
    month[day.day.month - 1] = 1.0

    forecast_temp_raw = day.channel("temperature")
    hdd, cdd = compute_hdd_cdd(forecast_temp_raw, hdd_base)

    gas = float(clip01(normalize(prev_day.channel("gas_price"), norm["gas_price"])).mean())
    coal = float(clip01(normalize(prev_day.channel("coal_price"), norm["coal_price"])).mean())

    return ConditionVector(
        lagged_prices=lagged_prices,
        lagged_demand=lagged_demand,
        day_of_week=dow,
        month=month,
        hdd=hdd,
        cdd=cdd,
        gas_price=gas,
        coal_price=coal,
        forecast_temperature=clip01(normalize(forecast_temp_raw, norm["temperature"])),
        forecast_irradiance=clip01(normalize(day.channel("irradiance"), norm["irradiance"])),
        forecast_wind=clip01(normalize(day.channel("wind_speed"), norm["wind_speed"])),
    )


def _parse_rows(path, schema: dict[str, str]):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames
        if header is None:
            raise EmptyDataset(f"{path} has no header row")
        for logical, column in schema.items():
            if column not in header:
                raise MalformedRow(1, f"header missing column {column!r}")

        rows = []
        for line_no, row in enumerate(reader, start=2):
            try:
                ts = datetime.fromisoformat(row[schema["timestamp"]].strip())
            except (ValueError, AttributeError, TypeError) as exc:
                raise MalformedRow(line_no, f"bad timestamp: {exc}") from exc
            if ts.minute not in (0, 30) or ts.second or ts.microsecond:
                raise MalformedRow(line_no, f"timestamp {ts} is off the 30-minute grid")
            values = {}
            for name in _VALUE_CHANNELS:
                raw = row.get(schema[name])
                try:
                    values[name] = float(raw)
                except (TypeError, ValueError) as exc:
                    raise MalformedRow(line_no, f"bad {name} value {raw!r}") from exc
                if not np.isfinite(values[name]):
                    raise MalformedRow(line_no, f"non-finite {name} value")
            rows.append((ts, values))
    return rows


def load_dataset(
    path,
    schema: dict[str, str] | None = None,
    clip_lo: float = PRICE_CLIP_LO,
    clip_hi: float = PRICE_CLIP_HI,
) -> Dataset:
    """Parse a CSV into a :class:`Dataset`.

    Timestamps must be strictly increasing; any day without all 48 half-hours
    is dropped and counted. Prices are clipped to [clip_lo, clip_hi] and
    normalized against those bounds; the remaining channels get min-max params
    fitted on the loaded days (fit on your training file only to avoid
    leakage).
    """
    schema = dict(DEFAULT_SCHEMA if schema is None else schema)
    rows = _parse_rows(path, schema)
    if not rows:
        raise EmptyDataset(f"{path} contains no data rows")

    for (prev_ts, _), (ts, _) in zip(rows, rows[1:]):
        if ts <= prev_ts:
            raise NonMonotonicTimestamps(f"timestamp {ts} does not follow {prev_ts}")

    by_day: dict[date_type, dict[int, dict[str, float]]] = {}
    for ts, values in rows:
        index = ts.hour * 2 + ts.minute // 30
        by_day.setdefault(ts.date(), {})[index] = values

    records = []
    dropped = []
    for day in sorted(by_day):
        slots = by_day[day]
        if len(slots) != HALF_HOURS_PER_DAY:
            dropped.append(day.isoformat())
            continue
        channels = {
            name: np.array([slots[k][name] for k in range(HALF_HOURS_PER_DAY)])
            for name in _VALUE_CHANNELS
        }
        channels["price"] = np.clip(channels["price"], clip_lo, clip_hi)
        records.append(DayRecord(day=day, channels=channels))

    if not records:
        raise EmptyDataset(f"{path} has no complete days")

    norm = {"price": MinMaxParams(clip_lo, clip_hi)}
    for name in _FITTED_CHANNELS:
        stacked = np.concatenate([rec.channels[name] for rec in records])
        lo, hi = float(stacked.min()), float(stacked.max())
        if hi == lo:
            # constant channel: center it at 0.5 rather than rejecting the file
            lo, hi = lo - 0.5, hi + 0.5
        norm[name] = MinMaxParams(lo, hi)

    report = LoadReport(
        rows_consumed=len(rows),
        days_loaded=len(records),
        days_dropped=len(dropped),
        dropped_days=tuple(dropped),
    )

    pairs = []
    for prev, cur in zip(records, records[1:]):
        if (cur.day - prev.day).days != 1:
            continue
        condition = build_conditions(prev, cur, norm)
        target = normalize(cur.channels["price"], norm["price"])
        pairs.append((condition, target))

    return Dataset(
        day_records=tuple(records),
        norm=norm,
        report=report,
        days=tuple(pairs),
    )
