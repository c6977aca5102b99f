"""Kinematic-bin containers and the delimited data schema.

One CSV row per phi point:

    set_id,k,Q2,xB,t,phi_deg,F,sigma_F

All rows of a set share (k, Q2, xB, t) exactly.  Loaders reject NaN values and
non-positive uncertainties with row/column diagnostics; floats are written via
repr() so identical data always round-trips to identical bytes.
"""

import csv
import math
import zlib
from dataclasses import dataclass, field

import numpy as np

from .errors import SchemaError
from .physics import Kinematics, derive_kinematics

CSV_COLUMNS = ["set_id", "k", "Q2", "xB", "t", "phi_deg", "F", "sigma_F"]


@dataclass(frozen=True)
class DataPoint:
    phi: float          # degrees, [0, 360)
    F: float            # measured cross section, nb/GeV^4
    sigma_F: float      # total uncertainty, same units

    def __post_init__(self):
        if not 0.0 <= self.phi < 360.0:
            raise SchemaError(f"phi={self.phi} outside [0, 360)")
        if not self.sigma_F > 0:
            raise SchemaError(f"sigma_F={self.sigma_F} must be positive")


@dataclass
class KinematicBin:
    set_id: str
    k: float
    Q2: float
    xB: float
    t: float
    points: list = field(default_factory=list)

    @property
    def n_points(self) -> int:
        return len(self.points)

    def phi(self) -> np.ndarray:
        return np.array([p.phi for p in self.points])

    def f_values(self) -> np.ndarray:
        return np.array([p.F for p in self.points])

    def sigma(self) -> np.ndarray:
        return np.array([p.sigma_F for p in self.points])

    def features(self) -> np.ndarray:
        """Model input (xB, Q2, t)."""
        return np.array([self.xB, self.Q2, self.t])

    def kinematics(self, enforce_cuts: bool = False) -> Kinematics:
        return derive_kinematics(self.k, self.Q2, self.xB, self.t,
                                 enforce_cuts=enforce_cuts)

    def with_f(self, new_f: np.ndarray) -> "KinematicBin":
        """Copy of this bin with replaced cross-section values."""
        pts = [DataPoint(p.phi, float(v), p.sigma_F) for p, v in zip(self.points, new_f)]
        return KinematicBin(self.set_id, self.k, self.Q2, self.xB, self.t, pts)


def stable_set_hash(set_id: str) -> int:
    """Platform-stable integer for seed derivation from a set identifier."""
    return zlib.crc32(str(set_id).encode())


def _parse_float(value, path, row_num, column):
    try:
        out = float(value)
    except (TypeError, ValueError):
        raise SchemaError(f"{path}:{row_num}: column {column!r} is not a number: {value!r}")
    if math.isnan(out) or math.isinf(out):
        raise SchemaError(f"{path}:{row_num}: column {column!r} is not finite: {value!r}")
    return out


def load_bins_csv(path) -> list:
    """Parse a cross-section CSV into KinematicBin objects, preserving order."""
    bins = {}
    order = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != CSV_COLUMNS:
            raise SchemaError(
                f"{path}: header {reader.fieldnames} does not match {CSV_COLUMNS}"
            )
        for row_num, row in enumerate(reader, start=2):
            set_id = row["set_id"]
            if set_id is None or set_id == "":
                raise SchemaError(f"{path}:{row_num}: empty set_id")
            vals = {c: _parse_float(row[c], path, row_num, c)
                    for c in CSV_COLUMNS if c != "set_id"}
            if vals["sigma_F"] <= 0:
                raise SchemaError(
                    f"{path}:{row_num}: column 'sigma_F' must be positive, got {vals['sigma_F']}"
                )
            try:
                point = DataPoint(vals["phi_deg"], vals["F"], vals["sigma_F"])
            except SchemaError as exc:
                raise SchemaError(f"{path}:{row_num}: {exc}") from None
            if set_id not in bins:
                bins[set_id] = KinematicBin(set_id, vals["k"], vals["Q2"],
                                            vals["xB"], vals["t"], [])
                order.append(set_id)
            else:
                head = bins[set_id]
                for col in ("k", "Q2", "xB", "t"):
                    if getattr(head, col) != vals[col]:
                        raise SchemaError(
                            f"{path}:{row_num}: column {col!r}={vals[col]} disagrees with "
                            f"earlier rows of set {set_id!r} ({getattr(head, col)})"
                        )
            bins[set_id].points.append(point)
    return [bins[sid] for sid in order]


def save_bins_csv(bins, path):
    """Write bins in the canonical schema with deterministic float text."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for b in bins:
            for p in b.points:
                writer.writerow([
                    b.set_id, repr(b.k), repr(b.Q2), repr(b.xB), repr(b.t),
                    repr(p.phi), repr(p.F), repr(p.sigma_F),
                ])
