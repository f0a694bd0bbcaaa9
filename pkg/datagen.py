"""
Weather corpus generator — deterministic daily-summary XML shaped like the
NOAA GHCN-D web service output, plus a manifest of ground truths for the
benchmark queries.

Layout under the output root:

    sensors/chunk-000/sensors-00000.xml ...   dataCollection/data records
    sensors_min/chunk-000/...                 TMIN records only
    sensors_max/chunk-000/...                 TMAX records only
    stations/stations-00000.xml ...           stationCollection/station
    manifest.txt                              key=value ground truths

Values are integers in tenths of the reported unit (°C for temperatures,
m/s for wind, mm for precipitation and snow).
"""

from __future__ import annotations

import datetime as dt
import logging
import math
from dataclasses import dataclass, field
from decimal import Decimal
from pathlib import Path
from typing import NamedTuple

import numpy as np
import pandas as pd
from lxml import etree

from errors import IngestIoError
from xdm import format_double

log = logging.getLogger(__name__)

DATA_TYPES = ("TMAX", "TMIN", "PRCP", "AWND", "SNOW")
MANIFEST_NAME = "manifest.txt"

KEY_WEST = "GHCND:USW00012836"
SYRACUSE = "GHCND:USW00014771"

# chance that a station reports the type on a given day
_REPORT_RATE = {"TMAX": 1.0, "TMIN": 1.0, "PRCP": 0.9, "AWND": 0.5, "SNOW": 0.3}

# generated values stay below these so planted extrema are the extrema
_TMAX_CEILING = 400
_TMIN_FLOOR = -400
_AWND_CEILING = 400
EXTREME_WIND = 491.744

_STATES = (
    ("FIPS:53", "WASHINGTON", "WA"),
    ("FIPS:06", "CALIFORNIA", "CA"),
    ("FIPS:48", "TEXAS", "TX"),
    ("FIPS:30", "MONTANA", "MT"),
    ("FIPS:12", "FLORIDA", "FL"),
    ("FIPS:36", "NEW YORK", "NY"),
)
_FOREIGN = (("FIPS:CA", "CANADA"), ("FIPS:MX", "MEXICO"))
_US = ("FIPS:US", "UNITED STATES")

QUERY_ANCHORS = (
    dt.date(1976, 7, 4),
    dt.date(1999, 3, 1),
    dt.date(1999, 6, 1),
    dt.date(1999, 9, 1),
    dt.date(2000, 1, 15),
    dt.date(2000, 7, 15),
    dt.date(2001, 1, 15),
    dt.date(2001, 7, 15),
    *(dt.date(year, 12, 25) for year in range(2001, 2011)),
)


class Plant(NamedTuple):
    """A reading forced into the corpus; ``value`` is in whole units (41.2 °C)."""

    data_type: str
    value: Decimal
    station: str
    date: dt.date

    @property
    def tenths(self) -> int:
        return int((self.value * 10).to_integral_value())


DEFAULT_PLANTS = (
    Plant("TMAX", Decimal("41.2"), KEY_WEST, dt.date(2000, 7, 15)),
    Plant("AWND", Decimal("50.3"), KEY_WEST, dt.date(2004, 12, 25)),
    Plant("TMIN", Decimal("-45.3"), SYRACUSE, dt.date(2001, 1, 15)),
)


@dataclass(frozen=True)
class GenSpec:
    seed: int = 42
    station_count: int = 12
    days: int = 60
    start: dt.date = dt.date(1999, 12, 1)
    partitions: int = 4
    records_per_file: int = 200
    stations_per_file: int = 50
    data_types: tuple[str, ...] = DATA_TYPES
    anchor_dates: tuple[dt.date, ...] = QUERY_ANCHORS
    plants: tuple[Plant, ...] = DEFAULT_PLANTS
    station_id_offset: int = 0

    def __post_init__(self) -> None:
        if self.station_count < 1 or self.days < 0:
            raise ValueError("station_count must be positive and days non-negative")
        if self.partitions < 1 or self.records_per_file < 1 or self.stations_per_file < 1:
            raise ValueError("partitions and file sizes must be positive")
        unknown = set(self.data_types) - set(DATA_TYPES)
        if unknown:
            raise ValueError(f"unknown data types: {', '.join(sorted(unknown))}")

    def scaled(self, factor: int) -> "GenSpec":
        """Same shape with ``factor`` times the stations, for scale-up corpora."""
        return GenSpec(
            self.seed, self.station_count * factor, self.days, self.start,
            self.partitions * factor, self.records_per_file, self.stations_per_file,
            self.data_types, self.anchor_dates, self.plants, self.station_id_offset,
        )


@dataclass
class Corpus:
    stations: pd.DataFrame
    readings: pd.DataFrame
    plants_applied: list[Plant] = field(default_factory=list)


# ── Stations ─────────────────────────────────────────────────────────

def _stations(spec: GenSpec, rng: np.random.Generator) -> pd.DataFrame:
    rows = []
    for i in range(spec.station_count):
        state, country = None, _US
        if i == 0:
            sid, name, state = KEY_WEST, "KEY WEST INTERNATIONAL AIRPORT, FL US", _STATES[4]
        elif i == 1:
            sid, name, state = SYRACUSE, "SYRACUSE HANCOCK INTERNATIONAL AIRPORT, NY US", _STATES[5]
        else:
            n = i + spec.station_id_offset
            if rng.random() < 0.2:
                country = _FOREIGN[n % len(_FOREIGN)]
                code = country[0][-2:]
                sid, name = f"GHCND:{code}{n:09d}", f"STATION {n:05d}, {code}"
            else:
                state = _STATES[(i - 2) % len(_STATES)]
                sid, name = f"GHCND:USC{n:08d}", f"STATION {n:05d}, {state[2]} US"
        rows.append({
            "id": sid,
            "displayName": name,
            "latitude": round(float(rng.uniform(15.0, 65.0)), 4),
            "longitude": round(float(rng.uniform(-160.0, -60.0)), 4),
            "state_id": state[0] if state else None,
            "state": state[1] if state else None,
            "country_id": country[0],
            "country": country[1],
        })
    return pd.DataFrame(rows)


# ── Readings ─────────────────────────────────────────────────────────

def _dates(spec: GenSpec) -> list[dt.date]:
    days = {spec.start + dt.timedelta(days=d) for d in range(spec.days)}
    days.update(spec.anchor_dates)
    return sorted(days)


def _values(data_type: str, n: int, rng: np.random.Generator) -> np.ndarray:
    if data_type == "TMAX":
        return np.clip(rng.normal(180, 90, n).round(), _TMIN_FLOOR + 150, _TMAX_CEILING)
    if data_type == "TMIN":
        return np.clip(rng.normal(60, 90, n).round(), _TMIN_FLOOR, _TMAX_CEILING - 150)
    if data_type == "PRCP":
        return np.where(rng.random(n) < 0.6, 0, rng.gamma(1.5, 40.0, n).round())
    if data_type == "AWND":
        return np.clip(rng.gamma(3.0, 15.0, n).round(), 0, _AWND_CEILING)
    return np.where(rng.random(n) < 0.8, 0, rng.gamma(2.0, 30.0, n).round())


def build_corpus(spec: GenSpec) -> Corpus:
    """All stations and readings as frames, before any file is written."""
    rng = np.random.default_rng(spec.seed)
    stations = _stations(spec, rng)
    known = set(stations["id"])
    plants = [p for p in spec.plants if p.station in known]
    for skipped in set(spec.plants) - set(plants):
        log.warning("plant %s for unknown station %s skipped", skipped.data_type, skipped.station)

    dates = sorted(set(_dates(spec)) | {p.date for p in plants})
    grid = pd.MultiIndex.from_product(
        [range(len(stations)), range(len(dates)), spec.data_types],
        names=["station_idx", "date_idx", "dataType"],
    ).to_frame(index=False)
    rate = grid["dataType"].map(_REPORT_RATE).to_numpy()
    grid = grid[rng.random(len(grid)) < rate].reset_index(drop=True)

    values = np.zeros(len(grid), dtype=np.int64)
    for data_type in spec.data_types:
        mask = (grid["dataType"] == data_type).to_numpy()
        values[mask] = _values(data_type, int(mask.sum()), rng)
    grid["value"] = values
    is_max = (grid["dataType"] == "TMAX").to_numpy()
    is_min = (grid["dataType"] == "TMIN").to_numpy()
    if is_max.any() and is_min.any():
        # both report daily, so every minimum has its maximum; keep min below max
        key = grid["station_idx"] * len(dates) + grid["date_idx"]
        highs = pd.Series(grid.loc[is_max, "value"].to_numpy(), index=key[is_max].to_numpy())
        spread = rng.integers(20, 160, int(is_min.sum()))
        lows = key[is_min].map(highs).to_numpy(dtype=np.int64) - spread
        grid.loc[is_min, "value"] = np.maximum(lows, _TMIN_FLOOR)

    grid["station"] = stations["id"].to_numpy()[grid["station_idx"].to_numpy()]
    grid["date"] = [dates[i] for i in grid["date_idx"]]
    readings = grid[["station", "date", "dataType", "value"]].copy()

    for plant in plants:
        hit = (
            (readings["station"] == plant.station)
            & (readings["date"] == plant.date)
            & (readings["dataType"] == plant.data_type)
        )
        if hit.any():
            readings.loc[hit, "value"] = plant.tenths
        else:
            extra = pd.DataFrame([{
                "station": plant.station, "date": plant.date,
                "dataType": plant.data_type, "value": plant.tenths,
            }])
            readings = pd.concat([readings, extra], ignore_index=True)

    order = {sid: i for i, sid in enumerate(stations["id"])}
    type_rank = {t: i for i, t in enumerate(DATA_TYPES)}
    readings = readings.assign(
        _s=readings["station"].map(order), _t=readings["dataType"].map(type_rank),
    ).sort_values(["_s", "date", "_t"], kind="stable").drop(columns=["_s", "_t"])
    return Corpus(stations, readings.reset_index(drop=True), plants)


# ── XML writers ──────────────────────────────────────────────────────

def _text(parent: etree._Element, tag: str, value: object) -> None:
    etree.SubElement(parent, tag).text = str(value)


def _data_element(row) -> etree._Element:
    el = etree.Element("data")
    _text(el, "date", f"{row.date.isoformat()}T00:00:00.000")
    _text(el, "dataType", row.dataType)
    _text(el, "station", row.station)
    _text(el, "value", int(row.value))
    return el


def _station_element(row) -> etree._Element:
    el = etree.Element("station")
    _text(el, "id", row.id)
    _text(el, "displayName", row.displayName)
    _text(el, "latitude", f"{row.latitude:.4f}")
    _text(el, "longitude", f"{row.longitude:.4f}")
    labels = [(row.country_id, row.country, "CNTRY")]
    if row.state_id:
        labels.insert(0, (row.state_id, row.state, "ST"))
    for label_id, label_name, label_type in labels:
        label = etree.SubElement(el, "locationLabels")
        _text(label, "type", label_type)
        _text(label, "id", label_id)
        _text(label, "displayName", label_name)
    return el


def _write_file(path: Path, root_tag: str, elements) -> int:
    path.parent.mkdir(parents=True, exist_ok=True)
    with etree.xmlfile(str(path), encoding="utf-8") as xf:
        xf.write_declaration()
        with xf.element(root_tag):
            for el in elements:
                xf.write(el)
    return path.stat().st_size


def _write_readings(root: Path, name: str, readings: pd.DataFrame, spec: GenSpec) -> tuple[int, int]:
    """Chunked files; chunk index rises with file index so sorted paths keep record order."""
    target = root / name
    file_count = max(1, math.ceil(len(readings) / spec.records_per_file))
    total = 0
    for f in range(file_count):
        chunk = f * spec.partitions // file_count
        rows = readings.iloc[f * spec.records_per_file:(f + 1) * spec.records_per_file]
        path = target / f"chunk-{chunk:03d}" / f"{name}-{f:05d}.xml"
        total += _write_file(path, "dataCollection", (_data_element(r) for r in rows.itertuples()))
    return file_count, total


def _write_stations(root: Path, stations: pd.DataFrame, spec: GenSpec) -> tuple[int, int]:
    file_count = max(1, math.ceil(len(stations) / spec.stations_per_file))
    total = 0
    for f in range(file_count):
        rows = stations.iloc[f * spec.stations_per_file:(f + 1) * spec.stations_per_file]
        path = root / "stations" / f"stations-{f:05d}.xml"
        total += _write_file(path, "stationCollection", (_station_element(r) for r in rows.itertuples()))
    return file_count, total


# ── Ground truths ────────────────────────────────────────────────────

def _tenths(value: float | None) -> str:
    """Lexical form of ``value div 10`` as the engine prints it; '' for the empty sequence."""
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return ""
    return format_double(float(value) / 10)


def ground_truths(corpus: Corpus) -> dict[str, str]:
    r = corpus.readings
    st = corpus.stations
    when = pd.to_datetime(r["date"])
    year = when.dt.year
    truths: dict[str, str] = {"records": str(len(r)), "stations": str(len(st))}
    for data_type in DATA_TYPES:
        truths[f"count.{data_type}"] = str(int((r["dataType"] == data_type).sum()))
    for data_type, agg in (("TMAX", "max"), ("TMIN", "min"), ("AWND", "max")):
        values = r.loc[r["dataType"] == data_type, "value"]
        truths[f"{agg}.{data_type}"] = _tenths(getattr(values, agg)() if len(values) else None)

    truths["station_date_history.count"] = str(int(
        ((r["station"] == KEY_WEST) & (year >= 2003) & (when.dt.month == 12) & (when.dt.day == 25)).sum()
    ))
    truths["extreme_wind.count"] = str(int(((r["dataType"] == "AWND") & (r["value"] > EXTREME_WIND)).sum()))

    rain = r.loc[(r["station"] == SYRACUSE) & (r["dataType"] == "PRCP") & (year == 1999), "value"]
    # sum of the empty sequence is the integer 0, and 0 div 10 prints as 0
    truths["annual_rainfall"] = _tenths(rain.sum()) if len(rain) else "0"

    tmax = r.loc[r["dataType"] == "TMAX", "value"]
    truths["highest_temperature"] = _tenths(tmax.max() if len(tmax) else None)

    washington = set(st.loc[st["state"].fillna("").str.upper() == "WASHINGTON", "id"])
    truths["specific_day_readings.count"] = str(int(
        (r["station"].isin(washington) & (r["date"] == dt.date(1976, 7, 4))).sum()
    ))
    truths["high_temperature_per_station.count"] = str(int(
        (r["station"].isin(set(st["id"])) & (r["dataType"] == "TMAX") & (year == 2000)).sum()
    ))

    us = set(st.loc[st["country_id"] == _US[0], "id"])
    tmin = r.loc[r["station"].isin(us) & (r["dataType"] == "TMIN") & (year == 2001), "value"]
    truths["lowest_us_temperature"] = _tenths(tmin.min() if len(tmin) else None)

    lows = r[r["dataType"] == "TMIN"][["station", "date", "value"]]
    highs = r[r["dataType"] == "TMAX"][["station", "date", "value"]]
    pairs = lows.merge(highs, on=["station", "date"], suffixes=("_min", "_max"))
    if len(pairs):
        diff = (pairs["value_max"] - pairs["value_min"]).astype(float).mean()
        truths["temperature_differential"] = repr(float(diff) / 10)
    else:
        truths["temperature_differential"] = ""
    truths["temperature_differential.pairs"] = str(len(pairs))
    return truths


# ── Manifest ─────────────────────────────────────────────────────────

def write_manifest(path: Path, entries: dict[str, str]) -> None:
    lines = [f"{key}={value}" for key, value in entries.items()]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_manifest(path: str | Path) -> dict[str, str]:
    entries: dict[str, str] = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        entries[key] = value
    return entries


def generate(spec: GenSpec, out: str | Path) -> dict[str, str]:
    """Write the corpus under ``out`` and return the manifest entries."""
    root = Path(out)
    try:
        root.mkdir(parents=True, exist_ok=True)
        corpus = build_corpus(spec)
        readings = corpus.readings
        entries: dict[str, str] = {
            "seed": str(spec.seed),
            "station_count": str(spec.station_count),
            "days": str(spec.days),
            "partitions": str(spec.partitions),
            "records_per_file": str(spec.records_per_file),
        }
        files, size = _write_readings(root, "sensors", readings, spec)
        entries.update({"files.sensors": str(files), "bytes.sensors": str(size)})
        for name, data_type in (("sensors_min", "TMIN"), ("sensors_max", "TMAX")):
            subset = readings[readings["dataType"] == data_type]
            files, size = _write_readings(root, name, subset, spec)
            entries.update({f"files.{name}": str(files), f"bytes.{name}": str(size)})
        files, size = _write_stations(root, corpus.stations, spec)
        entries.update({"files.stations": str(files), "bytes.stations": str(size)})
        for i, plant in enumerate(corpus.plants_applied):
            entries[f"plant.{i}"] = f"{plant.data_type} {plant.value} {plant.station} {plant.date.isoformat()}"
        entries.update(ground_truths(corpus))
        write_manifest(root / MANIFEST_NAME, entries)
    except OSError as exc:
        raise IngestIoError(f"cannot write corpus: {exc}", str(root)) from exc
    log.info("generated %s records for %d stations under %s (%s bytes of sensors)",
             entries["records"], spec.station_count, root, entries["bytes.sensors"])
    return entries
