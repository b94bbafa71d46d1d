"""World model: geometry, devices, blockage and the deployment vector.

A scenario is immutable after parsing and safe to share across workers.
Deployments are plain tuples of catalog indices (0 = empty site).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import yaml

Point = tuple[float, float]


class ScenarioError(ValueError):
    """Raised on schema or invariant violations; message carries the field path."""


@dataclass(frozen=True)
class Rect:
    xmin: float
    ymin: float
    xmax: float
    ymax: float

    def __post_init__(self):
        if not (self.xmax > self.xmin and self.ymax > self.ymin):
            raise ScenarioError(f"degenerate rectangle {self!r}")

    @property
    def width(self) -> float:
        return self.xmax - self.xmin

    @property
    def height(self) -> float:
        return self.ymax - self.ymin

    @property
    def area(self) -> float:
        return self.width * self.height

    def contains(self, p: Point, tol: float = 0.0) -> bool:
        return (self.xmin - tol <= p[0] <= self.xmax + tol
                and self.ymin - tol <= p[1] <= self.ymax + tol)

    def contains_rect(self, other: "Rect") -> bool:
        return (self.xmin <= other.xmin and self.ymin <= other.ymin
                and self.xmax >= other.xmax and self.ymax >= other.ymax)


@dataclass(frozen=True)
class RadioParams:
    carrier_frequency: float        # [Hz]
    bandwidth: float                # [Hz]
    noise_power_dbm: float
    pathloss_exponent: float = 2.0
    snr_min_db: float = 0.0
    snr_max_db: float = 20.0
    element_spacing: float = 0.5    # fraction of the carrier wavelength
    ue_tx_power_dbm: float = 30.0   # UE pilot EIRP for sensing links (non-standardized default)

    def __post_init__(self):
        if self.carrier_frequency <= 0:
            raise ScenarioError("rf.freq_hz must be > 0")
        if self.bandwidth <= 0:
            raise ScenarioError("rf.bandwidth_hz must be > 0")
        if self.pathloss_exponent <= 0:
            raise ScenarioError("rf.gamma must be > 0")
        if not self.snr_max_db > self.snr_min_db:
            raise ScenarioError("rf.snr_max_db must exceed rf.snr_min_db")
        if self.element_spacing <= 0:
            raise ScenarioError("rf.element_spacing must be > 0")


@dataclass(frozen=True)
class BaseStation:
    position: Point
    tx_power_dbm: float
    tx_gain: float = 1.0            # linear, also used as receive gain
    has_toa: bool = True
    has_aoa: bool = False
    aoa_sigma_min_sq: float | None = None   # [rad^2], required iff has_aoa

    def __post_init__(self):
        if not math.isfinite(self.tx_power_dbm):
            raise ScenarioError("base station tx_power_dbm must be finite")
        if self.tx_gain <= 0:
            raise ScenarioError("base station tx_gain must be > 0")
        if self.has_aoa and not (self.aoa_sigma_min_sq and self.aoa_sigma_min_sq > 0):
            raise ScenarioError("base station with has_aoa needs aoa_sigma_min_sq > 0")


@dataclass(frozen=True)
class DeviceSpec:
    id: int                         # catalog index, 1..V (0 is the empty site)
    kind: str                       # "RIS" or "BS"
    elements_h: int = 1
    elements_v: int = 1
    device_cost: float = 0.0
    install_cost: float = 0.0
    has_toa: bool = True
    has_aoa: bool = True
    # BS-kind only:
    tx_power_dbm: float | None = None
    tx_gain: float = 1.0
    aoa_sigma_min_sq: float | None = None

    def __post_init__(self):
        if self.kind not in ("RIS", "BS"):
            raise ScenarioError(f"catalog[{self.id}].kind must be RIS or BS")
        if self.id < 1:
            raise ScenarioError("catalog ids start at 1")
        if self.kind == "RIS" and (self.elements_h < 1 or self.elements_v < 1):
            raise ScenarioError(f"catalog[{self.id}]: element counts must be >= 1")
        if self.device_cost < 0 or self.install_cost < 0:
            raise ScenarioError(f"catalog[{self.id}]: costs must be >= 0")
        if self.kind == "BS":
            if self.tx_power_dbm is None:
                raise ScenarioError(f"catalog[{self.id}]: BS device needs tx_power_dbm")
            if self.has_aoa and not (self.aoa_sigma_min_sq and self.aoa_sigma_min_sq > 0):
                raise ScenarioError(f"catalog[{self.id}]: has_aoa needs aoa_sigma_min_sq > 0")

    @property
    def n_elements(self) -> int:
        return self.elements_h * self.elements_v


@dataclass(frozen=True)
class DeviceCatalog:
    devices: tuple[DeviceSpec, ...]

    def __post_init__(self):
        ids = [d.id for d in self.devices]
        if ids != list(range(1, len(ids) + 1)):
            raise ScenarioError("catalog ids must be contiguous 1..V")

    @property
    def n_devices(self) -> int:
        return len(self.devices)

    def get(self, index: int) -> DeviceSpec:
        if not 1 <= index <= len(self.devices):
            raise ScenarioError(f"device index {index} outside 1..{len(self.devices)}")
        return self.devices[index - 1]


@dataclass(frozen=True)
class CandidateSite:
    position: Point
    orientation_rad: float          # boresight of an installed RIS w.r.t. +x


@dataclass(frozen=True)
class Scenario:
    area_bounds: Rect
    ue_area: Rect
    base_stations: tuple[BaseStation, ...]
    candidate_sites: tuple[CandidateSite, ...]
    obstacles: tuple[tuple[Point, ...], ...]    # convex polygons, CCW
    catalog: DeviceCatalog
    budget_total: float
    grid_spacing: float
    rf: RadioParams
    # per-scenario memo of segment/point LOS queries; values are deterministic
    _los_cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if not self.area_bounds.contains_rect(self.ue_area):
            raise ScenarioError("ue_area must lie inside area")
        if len(self.candidate_sites) < 1:
            raise ScenarioError("N >= 1 violated: candidate_sites is empty")
        if self.grid_spacing <= 0:
            raise ScenarioError("grid_spacing_m must be > 0")
        if self.budget_total < 0:
            raise ScenarioError("budget_total must be >= 0")
        for k, poly in enumerate(self.obstacles):
            if len(poly) < 3:
                raise ScenarioError(f"obstacles[{k}]: needs >= 3 vertices")
            if not _is_convex_ccw(poly):
                raise ScenarioError(f"obstacles[{k}]: must be a convex polygon")
        for i, s in enumerate(self.candidate_sites):
            if not self.area_bounds.contains(s.position):
                raise ScenarioError(f"candidate_sites[{i}] outside area")
            k = _inside_obstacle(self, s.position)
            if k is not None:
                raise ScenarioError(f"candidate_sites[{i}] lies inside obstacles[{k}]")
        for j, b in enumerate(self.base_stations):
            if not self.area_bounds.contains(b.position):
                raise ScenarioError(f"base_stations[{j}] outside area")
            k = _inside_obstacle(self, b.position)
            if k is not None:
                raise ScenarioError(f"base_stations[{j}] lies inside obstacles[{k}]")

    @property
    def n_sites(self) -> int:
        return len(self.candidate_sites)

    @property
    def n_devices(self) -> int:
        return self.catalog.n_devices


# ---------------------------------------------------------------------------
# geometry

def _is_convex_ccw(poly: Sequence[Point]) -> bool:
    n = len(poly)
    area2 = 0.0
    for i in range(n):
        x0, y0 = poly[i]
        x1, y1 = poly[(i + 1) % n]
        area2 += x0 * y1 - x1 * y0
    if area2 == 0.0:
        return False
    sign = 1.0 if area2 > 0 else -1.0
    for i in range(n):
        ax, ay = poly[i]
        bx, by = poly[(i + 1) % n]
        cx, cy = poly[(i + 2) % n]
        cross = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
        if sign * cross < 0.0:
            return False
    return True


def _ccw(poly: Sequence[Point]) -> tuple[Point, ...]:
    area2 = sum(poly[i][0] * poly[(i + 1) % len(poly)][1]
                - poly[(i + 1) % len(poly)][0] * poly[i][1] for i in range(len(poly)))
    return tuple(poly) if area2 > 0 else tuple(reversed(poly))


def _point_strictly_inside(poly: Sequence[Point], p: Point, eps: float = 1e-12) -> bool:
    # CCW convex polygon: strictly inside iff left of every edge
    n = len(poly)
    for i in range(n):
        ax, ay = poly[i]
        bx, by = poly[(i + 1) % n]
        if (bx - ax) * (p[1] - ay) - (by - ay) * (p[0] - ax) <= eps:
            return False
    return True


def _inside_obstacle(scenario: Scenario, p: Point) -> int | None:
    for k, poly in enumerate(scenario.obstacles):
        if _point_strictly_inside(poly, p):
            return k
    return None


def _segment_blocked(poly: Sequence[Point], a: Point, b: Point) -> bool:
    """True iff segment a-b crosses the interior of a CCW convex polygon.

    Grazing contact (touching an edge or vertex, or running along the
    boundary) does not count as blockage.
    """
    dx, dy = b[0] - a[0], b[1] - a[1]
    t0, t1 = 0.0, 1.0
    n = len(poly)
    for i in range(n):
        ex, ey = poly[i]
        fx, fy = poly[(i + 1) % n]
        # inward normal of CCW edge e->f is (-(fy-ey), fx-ex)
        nx, ny = -(fy - ey), fx - ex
        num = nx * (ex - a[0]) + ny * (ey - a[1])   # >0 means a is outside this edge
        den = nx * dx + ny * dy
        if den == 0.0:
            if num > 0.0:
                return False        # parallel and fully outside this half-plane
            continue
        t = num / den
        if den > 0.0:               # entering the half-plane
            t0 = max(t0, t)
        else:
            t1 = min(t1, t)
        if t0 >= t1:
            return False
    if t1 - t0 <= 1e-12:
        return False                # grazing a vertex/edge only
    mx = a[0] + 0.5 * (t0 + t1) * dx
    my = a[1] + 0.5 * (t0 + t1) * dy
    return _point_strictly_inside(poly, (mx, my), eps=1e-12)


def los_check(scenario: Scenario, a: Point, b: Point) -> bool:
    """Line-of-sight predicate: no obstacle interior between a and b."""
    if a[0] == b[0] and a[1] == b[1]:
        return True
    key = (a[0], a[1], b[0], b[1])
    cached = scenario._los_cache.get(key)
    if cached is not None:
        return cached
    clear = True
    for poly in scenario.obstacles:
        if _segment_blocked(poly, a, b):
            clear = False
            break
    scenario._los_cache[key] = clear
    scenario._los_cache[(b[0], b[1], a[0], a[1])] = clear
    return clear


def ue_grid_coords(scenario: Scenario) -> tuple[np.ndarray, np.ndarray]:
    """Cell-center coordinates of the UE evaluation grid (xs, ys)."""
    d = scenario.grid_spacing
    ua = scenario.ue_area
    nx = max(1, int(round(ua.width / d)))
    ny = max(1, int(round(ua.height / d)))
    xs = ua.xmin + (np.arange(nx) + 0.5) * d
    ys = ua.ymin + (np.arange(ny) + 0.5) * d
    return xs, ys


def blockage_mask(scenario: Scenario, anchor: Point) -> np.ndarray:
    """Boolean LOS mask of the UE grid as seen from ``anchor``.

    mask[i, j] is True iff the anchor has line of sight to the center of
    cell (i, j).
    """
    xs, ys = ue_grid_coords(scenario)
    mask = np.empty((xs.size, ys.size), dtype=bool)
    for i, x in enumerate(xs):
        for j, y in enumerate(ys):
            mask[i, j] = los_check(scenario, anchor, (float(x), float(y)))
    return mask


# ---------------------------------------------------------------------------
# deployments

def check_deployment(scenario: Scenario, choices: Sequence[int]) -> tuple[int, ...]:
    """Validate a deployment vector; returns it as a tuple."""
    d = tuple(int(c) for c in choices)
    if len(d) != scenario.n_sites:
        raise ScenarioError(f"deployment length {len(d)} != N={scenario.n_sites}")
    v = scenario.n_devices
    for i, c in enumerate(d):
        if not 0 <= c <= v:
            raise ScenarioError(f"deployment[{i}]={c} outside 0..{v}")
    return d


def deployment_cost(scenario: Scenario, choices: Sequence[int]) -> float:
    """Total device + installation cost of the occupied sites."""
    d = check_deployment(scenario, choices)
    total = 0.0
    for c in d:
        if c != 0:
            spec = scenario.catalog.get(c)
            total += spec.device_cost + spec.install_cost
    return total


# ---------------------------------------------------------------------------
# parsing / serialization

def _req(mapping: dict, key: str, path: str):
    if key not in mapping:
        raise ScenarioError(f"{path}.{key} is missing")
    return mapping[key]


def _num(value, path: str) -> float:
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ScenarioError(f"{path} must be a number, got {value!r}") from None


def _point(value, path: str) -> Point:
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise ScenarioError(f"{path} must be a [x, y] pair")
    return (_num(value[0], path + "[0]"), _num(value[1], path + "[1]"))


def _rect(value, path: str) -> Rect:
    if not isinstance(value, (list, tuple)) or len(value) != 4:
        raise ScenarioError(f"{path} must be [xmin, ymin, xmax, ymax]")
    return Rect(*(_num(v, f"{path}[{i}]") for i, v in enumerate(value)))


def parse_scenario(text: str) -> Scenario:
    """Parse a YAML scenario document (schema documented in the README)."""
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioError(f"not valid YAML: {exc}") from None
    if not isinstance(doc, dict):
        raise ScenarioError("scenario document must be a mapping")

    area = _rect(_req(doc, "area", "scenario"), "area")
    ue_area = _rect(_req(doc, "ue_area", "scenario"), "ue_area")

    rf_doc = _req(doc, "rf", "scenario")
    if not isinstance(rf_doc, dict):
        raise ScenarioError("rf must be a mapping")

    bss = []
    for j, b in enumerate(doc.get("base_stations", []) or []):
        path = f"base_stations[{j}]"
        has_aoa = bool(b.get("has_aoa", False))
        bss.append(BaseStation(
            position=(_num(_req(b, "x", path), path + ".x"),
                      _num(_req(b, "y", path), path + ".y")),
            tx_power_dbm=_num(_req(b, "tx_power_dbm", path), path + ".tx_power_dbm"),
            tx_gain=_num(b.get("tx_gain", 1.0), path + ".tx_gain"),
            has_toa=bool(b.get("has_toa", True)),
            has_aoa=has_aoa,
            aoa_sigma_min_sq=(_num(b["aoa_sigma_min_sq"], path + ".aoa_sigma_min_sq")
                              if "aoa_sigma_min_sq" in b else None),
        ))

    default_ue_tx = max((b.tx_power_dbm for b in bss), default=30.0)
    rf = RadioParams(
        carrier_frequency=_num(_req(rf_doc, "freq_hz", "rf"), "rf.freq_hz"),
        bandwidth=_num(_req(rf_doc, "bandwidth_hz", "rf"), "rf.bandwidth_hz"),
        noise_power_dbm=_num(_req(rf_doc, "noise_dbm", "rf"), "rf.noise_dbm"),
        pathloss_exponent=_num(rf_doc.get("gamma", 2.0), "rf.gamma"),
        snr_min_db=_num(rf_doc.get("snr_min_db", 0.0), "rf.snr_min_db"),
        snr_max_db=_num(rf_doc.get("snr_max_db", 20.0), "rf.snr_max_db"),
        element_spacing=_num(rf_doc.get("element_spacing", 0.5), "rf.element_spacing"),
        ue_tx_power_dbm=_num(rf_doc.get("ue_tx_power_dbm", default_ue_tx),
                             "rf.ue_tx_power_dbm"),
    )

    sites_doc = doc.get("candidate_sites")
    if not sites_doc:
        raise ScenarioError("N >= 1 violated: candidate_sites is empty")
    sites = []
    for i, s in enumerate(sites_doc):
        path = f"candidate_sites[{i}]"
        sites.append(CandidateSite(
            position=(_num(_req(s, "x", path), path + ".x"),
                      _num(_req(s, "y", path), path + ".y")),
            orientation_rad=_num(s.get("orientation_rad", 0.0), path + ".orientation_rad"),
        ))

    obstacles = []
    for k, poly in enumerate(doc.get("obstacles", []) or []):
        path = f"obstacles[{k}]"
        if not isinstance(poly, (list, tuple)):
            raise ScenarioError(f"{path} must be a list of [x, y] vertices")
        obstacles.append(_ccw([_point(v, f"{path}[{m}]") for m, v in enumerate(poly)]))

    devices = []
    for i, c in enumerate(doc.get("catalog", []) or []):
        path = f"catalog[{i}]"
        kind = str(_req(c, "kind", path))
        common = dict(
            id=int(c.get("id", i + 1)),
            kind=kind,
            device_cost=_num(_req(c, "device_cost", path), path + ".device_cost"),
            install_cost=_num(_req(c, "install_cost", path), path + ".install_cost"),
            has_toa=bool(c.get("has_toa", True)),
            has_aoa=bool(c.get("has_aoa", kind == "RIS")),
        )
        if kind == "RIS":
            devices.append(DeviceSpec(
                elements_h=int(_req(c, "elements_h", path)),
                elements_v=int(_req(c, "elements_v", path)),
                **common,
            ))
        else:
            devices.append(DeviceSpec(
                tx_power_dbm=_num(_req(c, "tx_power_dbm", path), path + ".tx_power_dbm"),
                tx_gain=_num(c.get("tx_gain", 1.0), path + ".tx_gain"),
                aoa_sigma_min_sq=(_num(c["aoa_sigma_min_sq"], path + ".aoa_sigma_min_sq")
                                  if "aoa_sigma_min_sq" in c else None),
                **common,
            ))

    return Scenario(
        area_bounds=area,
        ue_area=ue_area,
        base_stations=tuple(bss),
        candidate_sites=tuple(sites),
        obstacles=tuple(obstacles),
        catalog=DeviceCatalog(tuple(devices)),
        budget_total=_num(doc.get("budget_total", 0.0), "budget_total"),
        grid_spacing=_num(doc.get("grid_spacing_m", 1.0), "grid_spacing_m"),
        rf=rf,
    )


def load_scenario(path) -> Scenario:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_scenario(fh.read())


def serialize_scenario(scenario: Scenario) -> str:
    """Canonical YAML form; parse_scenario(serialize_scenario(s)) == s."""
    doc = {
        "area": [scenario.area_bounds.xmin, scenario.area_bounds.ymin,
                 scenario.area_bounds.xmax, scenario.area_bounds.ymax],
        "ue_area": [scenario.ue_area.xmin, scenario.ue_area.ymin,
                    scenario.ue_area.xmax, scenario.ue_area.ymax],
        "grid_spacing_m": scenario.grid_spacing,
        "budget_total": scenario.budget_total,
        "rf": {
            "freq_hz": scenario.rf.carrier_frequency,
            "bandwidth_hz": scenario.rf.bandwidth,
            "noise_dbm": scenario.rf.noise_power_dbm,
            "gamma": scenario.rf.pathloss_exponent,
            "snr_min_db": scenario.rf.snr_min_db,
            "snr_max_db": scenario.rf.snr_max_db,
            "element_spacing": scenario.rf.element_spacing,
            "ue_tx_power_dbm": scenario.rf.ue_tx_power_dbm,
        },
        "base_stations": [
            {"x": b.position[0], "y": b.position[1],
             "tx_power_dbm": b.tx_power_dbm, "tx_gain": b.tx_gain,
             "has_toa": b.has_toa, "has_aoa": b.has_aoa,
             **({"aoa_sigma_min_sq": b.aoa_sigma_min_sq}
                if b.aoa_sigma_min_sq is not None else {})}
            for b in scenario.base_stations
        ],
        "candidate_sites": [
            {"x": s.position[0], "y": s.position[1], "orientation_rad": s.orientation_rad}
            for s in scenario.candidate_sites
        ],
        "obstacles": [[[x, y] for x, y in poly] for poly in scenario.obstacles],
        "catalog": [_device_doc(d) for d in scenario.catalog.devices],
    }
    return yaml.safe_dump(doc, sort_keys=True)


def _device_doc(d: DeviceSpec) -> dict:
    doc = {"id": d.id, "kind": d.kind,
           "device_cost": d.device_cost, "install_cost": d.install_cost,
           "has_toa": d.has_toa, "has_aoa": d.has_aoa}
    if d.kind == "RIS":
        doc.update(elements_h=d.elements_h, elements_v=d.elements_v)
    else:
        doc.update(tx_power_dbm=d.tx_power_dbm, tx_gain=d.tx_gain)
        if d.aoa_sigma_min_sq is not None:
            doc["aoa_sigma_min_sq"] = d.aoa_sigma_min_sq
    return doc
