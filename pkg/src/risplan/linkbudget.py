"""Radio link-budget models.

Friis power transfer, reflective-array gain patterns and beamwidth,
range/bearing measurement accuracies and per-point SNR assembly.  All
formulas run in linear units internally; dB conversions live here and
nowhere else.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

from .scenario import DeviceSpec, Scenario, los_check

SPEED_OF_LIGHT = 3.0e8  # [m/s]

NO_SIGNAL_DB = float("-inf")    # sentinel for "no LOS source reaches this point"


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def linear_to_db(x: float) -> float:
    if x <= 0.0:
        return NO_SIGNAL_DB
    return 10.0 * math.log10(x)


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def watts_to_dbm(w: float) -> float:
    if w <= 0.0:
        return NO_SIGNAL_DB
    return 10.0 * math.log10(w) + 30.0


def wavelength(rf) -> float:
    return SPEED_OF_LIGHT / rf.carrier_frequency


def wrap_angle(a: float) -> float:
    """Wrap to (-pi, pi]."""
    w = math.remainder(a, math.tau)
    return w if w != -math.pi else math.pi


@dataclass(frozen=True)
class SnrSample:
    value_db: float
    source_id: str
    los: bool


@dataclass(frozen=True)
class SensorAccuracy:
    kind: str                   # "toa" | "aoa"
    sigma: float                # [m] for toa (range domain), [rad] for aoa
    snr_at_measurement_db: float


# ---------------------------------------------------------------------------
# scalar models

def friis_rx_power(p_t_dbm: float, g_t: float, g_r: float, wl: float,
                   distance: float, gamma: float = 2.0) -> float:
    """Received power [dBm]: P_t * G_t * G_r * wl^2 / (4 pi d)^gamma."""
    if distance <= 0.0:
        raise ValueError("friis_rx_power: distance must be > 0")
    p_r = dbm_to_watts(p_t_dbm) * g_t * g_r * wl ** 2 / (4.0 * math.pi * distance) ** gamma
    return watts_to_dbm(p_r)


def _array_factor_sq(n: int, spacing_wl: float, steer: float, angle: float) -> float:
    """|normalized ULA array factor|^2 for n elements at spacing_wl * wavelength."""
    psi = math.tau * spacing_wl * (math.sin(angle) - math.sin(steer))
    half = 0.5 * psi
    s = math.sin(half)
    if abs(s) < 1e-12:
        return 1.0
    af = math.sin(n * half) / (n * s)
    return af * af


def ris_gain(spec: DeviceSpec, steer_angle: float, eval_angle: float,
             wl: float, spacing_wl: float = 0.5) -> float:
    """Linear gain of the reflective array steered to ``steer_angle``.

    Angles are azimuths relative to the surface boresight.  The azimuth
    pattern comes from the horizontal element row; the peak is scaled to
    the total element count, so gain(a, a) == n_elements.  Directions
    behind the surface get zero gain.
    """
    if spec.kind != "RIS":
        raise ValueError("ris_gain needs a RIS device spec")
    ev = wrap_angle(eval_angle)
    if not -math.pi / 2 < ev < math.pi / 2:
        return 0.0
    ne = spec.n_elements
    # spacing is a fixed fraction of the wavelength, so wl cancels in psi
    return ne * _array_factor_sq(spec.elements_h, spacing_wl, steer_angle, ev)


@lru_cache(maxsize=128)
def _beamwidth_sigma(n_h: int, spacing_wl: float) -> float:
    if n_h < 1:
        raise ValueError("element count must be >= 1")
    target = math.exp(-0.5)

    def g(angle: float) -> float:
        return _array_factor_sq(n_h, spacing_wl, 0.0, angle)

    # bracket the first crossing of the e^{-1/2} level on a dense scan
    n_scan = 4096
    lo = 0.0
    hi = None
    for k in range(1, n_scan + 1):
        a = 0.5 * math.pi * k / n_scan
        if g(a) < target:
            hi = a
            break
        lo = a
    if hi is None:
        raise ValueError("beam too broad: no e^{-1/2} crossing in (-pi/2, pi/2)")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if g(mid) < target:
            hi = mid
        else:
            lo = mid
        if hi - lo < 1e-15:
            break
    return 0.5 * (lo + hi)


def ris_beamwidth_sigma(spec: DeviceSpec, wl: float,
                        spacing_wl: float = 0.5) -> float:
    """Beam half-width [rad] at the G_max * e^{-1/2} level of the steered beam.

    Used as the base bearing accuracy of the array when acting as an
    angle sensor; its square feeds the SNR-dependent variance model.
    """
    if spec.kind != "RIS":
        raise ValueError("ris_beamwidth_sigma needs a RIS device spec")
    return _beamwidth_sigma(spec.elements_h, spec.elements_v, spacing_wl)


def toa_sigma(bandwidth: float, snr_linear: float) -> float:
    """Range accuracy [m] of a secondary-radar round trip at the given SNR."""
    if snr_linear <= 0.0:
        raise ValueError("toa_sigma: snr_linear must be > 0")
    return SPEED_OF_LIGHT / (2.0 * bandwidth * math.sqrt(2.0 * snr_linear))


def aoa_variance(sigma_min_sq: float, snr_m_db: float, snr_min_db: float,
                 snr_max_db: float) -> float:
    """Bearing variance [rad^2] with sigmoid degradation in measurement SNR.

    Equals sigma_min_sq / 0.9 at snr_max, sigma_min_sq / 0.1 at snr_min
    and 2 * sigma_min_sq at the midpoint.
    """
    if sigma_min_sq <= 0.0:
        raise ValueError("aoa_variance: sigma_min_sq must be > 0")
    if not snr_max_db > snr_min_db:
        raise ValueError("aoa_variance: snr_max_db must exceed snr_min_db")
    snr_c = 0.5 * (snr_max_db + snr_min_db)
    k = 2.0 * math.log(9.0) / (snr_max_db - snr_min_db)
    z = -k * (snr_m_db - snr_c)
    if z > 700.0:
        return math.inf
    return sigma_min_sq * (1.0 + math.exp(z))


# ---------------------------------------------------------------------------
# scenario-level SNR assembly

@dataclass(frozen=True)
class _Emitter:
    """A BS-like node: a fixed base station or a deployed BS device."""
    id: str
    position: tuple[float, float]
    tx_power_dbm: float
    gain: float
    has_toa: bool
    has_aoa: bool
    aoa_sigma_min_sq: float | None


def emitter_nodes(scenario: Scenario, choices: Sequence[int]) -> list[_Emitter]:
    nodes = [
        _Emitter(f"bs{j}", b.position, b.tx_power_dbm, b.tx_gain,
                 b.has_toa, b.has_aoa, b.aoa_sigma_min_sq)
        for j, b in enumerate(scenario.base_stations)
    ]
    for i, c in enumerate(choices):
        if c == 0:
            continue
        spec = scenario.catalog.get(c)
        if spec.kind == "BS":
            nodes.append(_Emitter(
                f"site{i}", scenario.candidate_sites[i].position,
                spec.tx_power_dbm, spec.tx_gain,
                spec.has_toa, spec.has_aoa, spec.aoa_sigma_min_sq))
    return nodes


def deployed_ris(scenario: Scenario, choices: Sequence[int]):
    """(site index, site, device spec) triples of the deployed RIS units."""
    out = []
    for i, c in enumerate(choices):
        if c == 0:
            continue
        spec = scenario.catalog.get(c)
        if spec.kind == "RIS":
            out.append((i, scenario.candidate_sites[i], spec))
    return out


def _dist(a, b) -> float:
    return max(math.hypot(b[0] - a[0], b[1] - a[1]), 1e-9)


def in_front(site, p) -> bool:
    """True iff point p lies in the half-plane faced by the site's surface."""
    bearing = math.atan2(p[1] - site.position[1], p[0] - site.position[0])
    return abs(wrap_angle(bearing - site.orientation_rad)) < math.pi / 2


def ris_element_power(scenario: Scenario, choices: Sequence[int],
                      site_index: int) -> float:
    """Strongest per-element illumination [dBm] of the RIS at ``site_index``.

    Maximum over BS-like emitters with line of sight on the front side of
    the surface; -inf when dark.
    """
    site = scenario.candidate_sites[site_index]
    wl = wavelength(scenario.rf)
    gamma = scenario.rf.pathloss_exponent
    best = NO_SIGNAL_DB
    for node in emitter_nodes(scenario, choices):
        if node.position == site.position:
            continue
        if not in_front(site, node.position):
            continue
        if not los_check(scenario, node.position, site.position):
            continue
        p = friis_rx_power(node.tx_power_dbm, node.gain, 1.0, wl,
                           _dist(node.position, site.position), gamma)
        best = max(best, p)
    return best


def snr_at_point(scenario: Scenario, choices: Sequence[int],
                 p: tuple[float, float]) -> tuple[float, list[SnrSample]]:
    """Downlink SNR [dB] at p and the per-source sample list.

    Direct BS links and two-hop RIS reflections both contribute; the
    strongest LOS sample wins.  Returns -inf when p is shadowed from
    every source.
    """
    rf = scenario.rf
    wl = wavelength(rf)
    gamma = rf.pathloss_exponent
    samples: list[SnrSample] = []

    for node in emitter_nodes(scenario, choices):
        los = los_check(scenario, node.position, p)
        if not los:
            samples.append(SnrSample(NO_SIGNAL_DB, node.id, False))
            continue
        rx = friis_rx_power(node.tx_power_dbm, node.gain, 1.0, wl,
                            _dist(node.position, p), gamma)
        samples.append(SnrSample(rx - rf.noise_power_dbm, node.id, True))

    for i, site, spec in deployed_ris(scenario, choices):
        los = los_check(scenario, site.position, p) and in_front(site, p)
        if not los:
            samples.append(SnrSample(NO_SIGNAL_DB, f"site{i}", False))
            continue
        p_elem = ris_element_power(scenario, choices, i)
        if p_elem == NO_SIGNAL_DB:
            samples.append(SnrSample(NO_SIGNAL_DB, f"site{i}", True))
            continue
        p_total = p_elem + linear_to_db(spec.n_elements)
        theta = wrap_angle(math.atan2(p[1] - site.position[1],
                                      p[0] - site.position[0]) - site.orientation_rad)
        g = ris_gain(spec, theta, theta, wl)
        if g <= 0.0:
            samples.append(SnrSample(NO_SIGNAL_DB, f"site{i}", True))
            continue
        rx = friis_rx_power(p_total, g, 1.0, wl, _dist(site.position, p), gamma)
        samples.append(SnrSample(rx - rf.noise_power_dbm, f"site{i}", True))

    snr = max((s.value_db for s in samples if s.los), default=NO_SIGNAL_DB)
    return snr, samples


def ris_anchor_snr(scenario: Scenario, choices: Sequence[int],
                   ris_index: int, p: tuple[float, float]) -> float:
    """SNR [dB] of the two-hop UE -> RIS -> best-BS sensing path.

    The UE pilot is collected per element, aggregated over the array and
    reflected with full steering gain toward the best-receiving BS-like
    node.  Requires line of sight on both hops; -inf otherwise.  This is
    the measurement SNR of the RIS when it acts as a range anchor or as
    a bearing sensor.
    """
    c = choices[ris_index]
    if c == 0 or scenario.catalog.get(c).kind != "RIS":
        raise ValueError(f"no RIS deployed at site {ris_index}")
    spec = scenario.catalog.get(c)
    site = scenario.candidate_sites[ris_index]
    rf = scenario.rf
    wl = wavelength(rf)
    gamma = rf.pathloss_exponent

    if not (los_check(scenario, p, site.position) and in_front(site, p)):
        return NO_SIGNAL_DB
    p_elem = friis_rx_power(rf.ue_tx_power_dbm, 1.0, 1.0, wl,
                            _dist(p, site.position), gamma)
    p_total = p_elem + linear_to_db(spec.n_elements)

    best = NO_SIGNAL_DB
    for node in emitter_nodes(scenario, choices):
        if node.position == site.position:
            continue
        if not in_front(site, node.position):
            continue
        if not los_check(scenario, site.position, node.position):
            continue
        theta = wrap_angle(math.atan2(node.position[1] - site.position[1],
                                      node.position[0] - site.position[0])
                           - site.orientation_rad)
        g = ris_gain(spec, theta, theta, wl)
        if g <= 0.0:
            continue
        rx = friis_rx_power(p_total, g, node.gain, wl,
                            _dist(site.position, node.position), gamma)
        best = max(best, rx - rf.noise_power_dbm)
    return best
