"""CSV/JSON readers and writers for the on-disk formats.

Floats are written with 17 significant digits so that every file round-trips
to the identical float64 value.
"""
from __future__ import annotations

import csv
import datetime as _dt
import json
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import (
    FeatureTensor,
    InferenceConfig,
    InfectionNetwork,
    Metapopulation,
    OutbreakSeries,
    validate_metapopulation,
)
from .errors import DimensionMismatch, InvalidSeries


def fmt(x: float) -> str:
    return format(float(x), ".17g")


def read_zones(path) -> Metapopulation:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or reader.fieldnames[:2] != ["zone_id", "population"]:
            raise ValueError(f"{path}: header must start with zone_id,population")
        return validate_metapopulation(list(reader))


def write_zones(path, pop: Metapopulation) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if pop.centroids is None:
            w.writerow(["zone_id", "population"])
            for zid, p in zip(pop.zone_ids, pop.populations):
                w.writerow([zid, fmt(p)])
        else:
            w.writerow(["zone_id", "population", "x_km", "y_km"])
            for zid, p, (x, y) in zip(pop.zone_ids, pop.populations, pop.centroids):
                w.writerow([zid, fmt(p), fmt(x), fmt(y)])


def read_deltas(path, pop: Metapopulation, beta: float) -> OutbreakSeries:
    """Read ``date,<zone ids...>``; columns are reordered to canonical order."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][0] != "date":
        raise InvalidSeries(f"{path}: header must start with 'date'")
    header = rows[0][1:]
    if sorted(header) != sorted(pop.zone_ids):
        raise DimensionMismatch(f"{path}: zone columns do not match the zone registry")
    order = [header.index(z) for z in pop.zone_ids]
    body = [r for r in rows[1:] if r]
    if not body:
        raise InvalidSeries(f"{path}: no data rows")
    dates = [_dt.date.fromisoformat(r[0]) for r in body]
    for a, b in zip(dates, dates[1:]):
        if (b - a).days != 1:
            raise InvalidSeries(f"{path}: dates must be consecutive days ({a} -> {b})")
    values = np.array([[float(x) for x in r[1:]] for r in body])
    series = OutbreakSeries(values[:, order], beta=beta, day0=dates[0])
    series.check_against(pop)
    return series


def write_deltas(path, series: OutbreakSeries, pop: Metapopulation) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", *pop.zone_ids])
        for day, row in zip(series.dates, series.deltas):
            w.writerow([day.isoformat(), *map(fmt, row)])


def read_matrix(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    a = np.array([[float(x) for x in r] for r in rows])
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"{path}: expected a square matrix, got {a.shape}")
    return a


def write_matrix(path, a: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in np.asarray(a):
            w.writerow([fmt(x) for x in row])


def read_network(path, pop: Metapopulation | None = None) -> InfectionNetwork:
    g = InfectionNetwork(read_matrix(path))
    if pop is not None and g.n != pop.n:
        raise DimensionMismatch(f"{path}: network is {g.n}x{g.n} but there are {pop.n} zones")
    return g


def write_network(path, g: InfectionNetwork) -> None:
    write_matrix(path, g.g)


def read_feature_slices(paths: Sequence) -> tuple[list[np.ndarray], list[str]]:
    slices = [read_matrix(p) for p in paths]
    names = [Path(p).stem for p in paths]
    return slices, names


def write_features(directory, x: FeatureTensor) -> list[Path]:
    out = []
    for k, name in enumerate(x.names):
        p = Path(directory) / f"{name}.csv"
        write_matrix(p, x.x[:, :, k])
        out.append(p)
    return out


def read_config(path) -> InferenceConfig:
    with open(path) as fh:
        return InferenceConfig.from_dict(json.load(fh))


def write_config(path, cfg: InferenceConfig) -> None:
    with open(path, "w") as fh:
        json.dump(cfg.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_vector(path, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(x) if isinstance(x, (float, np.floating)) else x for x in row])
