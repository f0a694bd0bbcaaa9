"""
Weather corpus generator — determinism, layout and the manifest.
"""

from __future__ import annotations

import datetime as dt

from datagen import KEY_WEST, MANIFEST_NAME, GenSpec, build_corpus, generate, read_manifest
from xml_ingest import Catalog, DocumentHandle, parse_document


def test_manifest_round_trips(weather):
    root, manifest = weather
    assert read_manifest(root / MANIFEST_NAME) == manifest
    assert manifest["stations"] == "6"
    assert int(manifest["records"]) == sum(int(manifest[f"count.{t}"]) for t in ("TMAX", "TMIN", "PRCP", "AWND", "SNOW"))


def test_layout(weather):
    root, manifest = weather
    chunks = sorted(p.name for p in (root / "sensors").iterdir())
    assert chunks == ["chunk-000", "chunk-001", "chunk-002", "chunk-003"]
    files = sorted((root / "sensors").rglob("*.xml"))
    assert len(files) == int(manifest["files.sensors"])
    assert sum(f.stat().st_size for f in files) == int(manifest["bytes.sensors"])
    assert (root / "stations" / "stations-00000.xml").is_file()


def test_readings_parse_with_the_expected_shape(weather):
    root, _ = weather
    first = sorted((root / "sensors").rglob("*.xml"))[0]
    doc = parse_document(first.read_bytes(), DocumentHandle(0, str(first), 0))
    (collection,) = doc.element_children("dataCollection")
    data = next(iter(collection.element_children("data")))
    assert [c.name for c in data.element_children()] == ["date", "dataType", "station", "value"]
    assert data.string_value.startswith(f"{dt.date(1976, 7, 4).isoformat()}T00:00:00.000")


def test_catalog_sees_every_file(weather):
    root, manifest = weather
    catalog = Catalog(str(root), 1)
    assert len(catalog.documents("/sensors_max")) == int(manifest["files.sensors_max"])


def test_same_seed_same_bytes(tmp_path):
    spec = GenSpec(seed=3, station_count=3, days=4, partitions=2, records_per_file=40)
    a, b = generate(spec, tmp_path / "a"), generate(spec, tmp_path / "b")
    assert a == b
    for f in sorted((tmp_path / "a").rglob("*.xml")):
        twin = tmp_path / "b" / f.relative_to(tmp_path / "a")
        assert f.read_bytes() == twin.read_bytes()


def test_different_seed_differs():
    spec = GenSpec(seed=3, station_count=3, days=4)
    other = GenSpec(seed=4, station_count=3, days=4)
    assert not build_corpus(spec).readings.equals(build_corpus(other).readings)


def test_minimal_corpus(tmp_path):
    spec = GenSpec(station_count=1, days=1, data_types=("TMAX",), anchor_dates=(), plants=())
    manifest = generate(spec, tmp_path)
    assert manifest["records"] == "1"
    assert manifest["count.TMAX"] == "1" and manifest["count.TMIN"] == "0"
    assert manifest["min.TMIN"] == ""
    assert manifest["annual_rainfall"] == "0"
    assert manifest["temperature_differential"] == ""
    assert manifest["temperature_differential.pairs"] == "0"
    assert manifest["files.sensors_min"] == "1"


def test_plants_for_missing_stations_are_skipped(tmp_path):
    manifest = generate(GenSpec(station_count=1, days=0), tmp_path)
    planted = [v for k, v in manifest.items() if k.startswith("plant.")]
    assert planted and all(KEY_WEST in v for v in planted)
    assert manifest["highest_temperature"] == "41.2"


def test_every_minimum_is_below_its_maximum():
    r = build_corpus(GenSpec(seed=11, station_count=4, days=20)).readings
    lows = r[r["dataType"] == "TMIN"].set_index(["station", "date"])["value"]
    highs = r[r["dataType"] == "TMAX"].set_index(["station", "date"])["value"]
    joined = lows.to_frame("low").join(highs.to_frame("high"), how="inner")
    assert len(joined) == len(lows)
    assert (joined["low"] < joined["high"]).all()


def test_scaled_spec():
    spec = GenSpec(station_count=5, partitions=2).scaled(3)
    assert spec.station_count == 15 and spec.partitions == 6
