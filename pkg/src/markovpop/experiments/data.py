"""Embedded cruise-ship testing data and CSV readers/writers."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from ..errors import MalformedRow, NonMonotoneTime
from ..inference.likelihoods import BinomialObservation
from ..model import StepFunction, Trajectory

log = logging.getLogger(__name__)

SHIP_N = 3711


@dataclass(frozen=True)
class CovidRow:
    day: int
    n: int | None
    y: int | None
    on_ship: int


# day, tests, positives, people on board; no testing on days 7 and 10
COVID_ROWS = (
    CovidRow(1, 31, 10, 3711),
    CovidRow(2, 71, 10, 3711),
    CovidRow(3, 171, 41, 3711),
    CovidRow(4, 6, 3, 3711),
    CovidRow(5, 57, 6, 3711),
    CovidRow(6, 103, 65, 3711),
    CovidRow(7, None, None, 3711),
    CovidRow(8, 53, 39, 3711),
    CovidRow(9, 221, 44, 3711),
    CovidRow(10, None, None, 3451),
    CovidRow(11, 217, 67, 3451),
    CovidRow(12, 289, 70, 3451),
    CovidRow(13, 504, 99, 3183),
    CovidRow(14, 681, 88, 3183),
    CovidRow(15, 607, 79, 3183),
    CovidRow(16, 52, 13, 2213),
)


def covid_observations() -> list[BinomialObservation]:
    return [BinomialObservation(float(r.day), r.n, r.y) for r in COVID_ROWS if r.n is not None]


def disembarkment_hazard(rows=COVID_ROWS) -> StepFunction:
    """Piecewise-constant removal hazard for susceptibles.

    Each drop in the on-board count between consecutive days becomes a
    constant hazard on that one-day interval, sized so an exponentially
    decaying class loses the same fraction: ``-log(after / before)``.
    """
    breaks, values = [], [0.0]
    for prev, cur in zip(rows, rows[1:]):
        if cur.on_ship < prev.on_ship:
            rate = -math.log(cur.on_ship / prev.on_ship) / (cur.day - prev.day)
            if breaks and breaks[-1] == prev.day:
                values[-1] = rate
            else:
                breaks.append(float(prev.day))
                values.append(rate)
            breaks.append(float(cur.day))
            values.append(0.0)
    return StepFunction(tuple(breaks), tuple(values))


def packaged_path(name: str) -> Path:
    return Path(str(resources.files("markovpop") / "data" / name))


def write_trajectory_csv(traj: Trajectory, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("t",) + traj.class_names)
        for t, row in zip(traj.times, traj.states):
            w.writerow([f"{t:.17g}"] + [f"{v:.17g}" for v in row])


def _rows(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise MalformedRow("empty file", 1) from None
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise MalformedRow(f"expected {len(header)} fields, got {len(row)}", lineno)
            yield header, lineno, [c.strip() for c in row]


def _is_na(cell: str) -> bool:
    return cell.upper() in ("NA", "NAN", "")


def _is_binomial(header) -> bool:
    return header[1:3] == ["n", "y"] and header[3:] in ([], ["on_ship"])


def ingest_csv(path):
    """Read a trajectory (``t,<classes...>``) or binomial (``t,n,y[,on_ship]``) CSV.

    Rows with missing values are dropped with a warning. Returns a
    :class:`Trajectory` or a list of :class:`BinomialObservation`.
    """
    times, values, header = [], [], None
    for header, lineno, row in _rows(path):
        if header[0] != "t":
            raise MalformedRow("first column must be 't'", 1)
        if any(_is_na(c) for c in row):
            log.warning("%s line %d: missing value, row dropped", path, lineno)
            continue
        try:
            t = float(row[0])
            vals = [float(c) for c in row[1:]]
        except ValueError as exc:
            raise MalformedRow(str(exc), lineno) from None
        if times and t <= times[-1]:
            raise NonMonotoneTime(f"line {lineno}: time {t} does not increase")
        if _is_binomial(header):
            n, y = vals[:2]
            if n != int(n) or y != int(y) or not 0 <= y <= n:
                raise MalformedRow(f"need integers 0 <= y <= n, got n={n}, y={y}", lineno)
        times.append(t)
        values.append(vals)
    if header is None:
        raise MalformedRow("no header", 1)
    if _is_binomial(header):
        return [BinomialObservation(t, int(v[0]), int(v[1])) for t, v in zip(times, values)]
    return Trajectory(np.array(times), np.array(values).reshape(len(times), len(header) - 1),
                      tuple(header[1:]))


def read_covid_csv(path) -> tuple[CovidRow, ...]:
    """Ship data with missing test days kept (``t,n,y,on_ship``)."""
    rows = []
    for header, lineno, row in _rows(path):
        if header != ["t", "n", "y", "on_ship"]:
            raise MalformedRow("header must be t,n,y,on_ship", 1)
        try:
            n, y = (None, None) if _is_na(row[1]) else (int(row[1]), int(row[2]))
            rows.append(CovidRow(int(row[0]), n, y, int(row[3])))
        except ValueError as exc:
            raise MalformedRow(str(exc), lineno) from None
    return tuple(rows)


def write_covid_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("t", "n", "y", "on_ship"))
        for r in rows:
            w.writerow([r.day, "NA" if r.n is None else r.n, "NA" if r.y is None else r.y, r.on_ship])


def write_binomial_csv(obs, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("t", "n", "y"))
        for o in obs:
            w.writerow([f"{o.t:g}", o.n, o.y])
