"""Optical chain models: attenuation, band-pass filtering, the one-slot-delay
Mach-Zehnder interferometer, and the wavelength-dependent output couplers.

All light is carried as a mean photon number per slot; Poisson statistics
enter only at the detectors.  The interferometer is lossless: each slot's
two output-port intensities sum to the interfering input mean.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class SlotField:
    """Optical state of one clock slot.

    `phase` is stored modulo 2*pi; `mean_photons` is a mean photon number
    per slot (dimensionless), valid for both weak signal and bright attack
    light.
    """

    slot: int
    mean_photons: float
    phase: float
    wavelength_nm: float

    def __post_init__(self):
        if self.mean_photons < 0.0:
            raise ValueError(f"mean_photons must be >= 0, got {self.mean_photons}")
        if self.wavelength_nm <= 0.0:
            raise ValueError(f"wavelength_nm must be > 0, got {self.wavelength_nm}")
        object.__setattr__(self, "phase", self.phase % TWO_PI)


@dataclass(frozen=True)
class PortIntensities:
    """Mean photons per slot at the two interferometer output ports."""

    port1_mean: float
    port2_mean: float


@dataclass(frozen=True)
class CouplerModel:
    """50:50 coupler with a linear wavelength dependence of its split ratio.

    The splitting ratio is r(lam) = clamp(0.5 + slope * (lam - center), 0, 1),
    exactly 0.5 on center.  The slope has no measured value; it exists so a
    detuned-wavelength attack on the couplers can be expressed at all.
    """

    center_wavelength_nm: float = 1551.0
    ratio_slope_per_nm: float = 0.0

    def ratio(self, wavelength_nm):
        r = 0.5 + self.ratio_slope_per_nm * (wavelength_nm - self.center_wavelength_nm)
        return min(1.0, max(0.0, r))


@dataclass(frozen=True)
class BandpassFilter:
    """Optical band-pass in front of the interferometer.

    In-band light (|lam - center| <= width/2) passes untouched; out-of-band
    light is attenuated by `out_of_band_suppression_dB`.  A disabled filter
    is the identity.
    """

    enabled: bool = False
    center_nm: float = 1551.0
    width_nm: float = 2.0
    out_of_band_suppression_dB: float = 40.0

    def __post_init__(self):
        if self.width_nm <= 0.0:
            raise ValueError("filter width_nm must be > 0")
        if self.out_of_band_suppression_dB < 0.0:
            raise ValueError("out_of_band_suppression_dB must be >= 0")

    def transmission(self, wavelength_nm) -> float:
        if not self.enabled:
            return 1.0
        if abs(wavelength_nm - self.center_nm) <= self.width_nm / 2.0:
            return 1.0
        return 10.0 ** (-self.out_of_band_suppression_dB / 10.0)


def attenuate(field: SlotField, loss_dB: float) -> SlotField:
    """Attenuate a slot field by `loss_dB`; gain is not modeled."""
    if not math.isfinite(loss_dB):
        raise ValueError("loss_dB must be finite")
    if loss_dB < 0.0:
        raise ValueError("negative loss_dB (gain) is not modeled")
    return SlotField(
        slot=field.slot,
        mean_photons=field.mean_photons * 10.0 ** (-loss_dB / 10.0),
        phase=field.phase,
        wavelength_nm=field.wavelength_nm,
    )


def apply_bandpass(field: SlotField, filt: BandpassFilter) -> SlotField:
    """Pass a slot field through the band-pass filter."""
    t = filt.transmission(field.wavelength_nm)
    if t == 1.0:
        return field
    return SlotField(
        slot=field.slot,
        mean_photons=field.mean_photons * t,
        phase=field.phase,
        wavelength_nm=field.wavelength_nm,
    )


def mzi_interfere(
    current_phase: float, previous_phase: float, interfering_mean: float
) -> PortIntensities:
    """Port intensities for a slot interfering with its predecessor.

    With dphi = current_phase - previous_phase, port 1 receives
    mean*(1+cos dphi)/2 and port 2 the complement; dphi = 0 routes fully
    to port 1, dphi = pi fully to port 2.
    """
    if interfering_mean < 0.0:
        raise ValueError("interfering_mean must be >= 0")
    c = math.cos(current_phase - previous_phase)
    return PortIntensities(
        port1_mean=interfering_mean * (1.0 + c) / 2.0,
        port2_mean=interfering_mean * (1.0 - c) / 2.0,
    )


def mzi_interfere_fields(previous: SlotField | None, current: SlotField) -> PortIntensities:
    """Port intensities from the two-amplitude interference of consecutive slots.

    Amplitude picture: each pulse splits between the short and the delayed
    arm, so the slot-k output combines sqrt(m_k) e^{i phi_k} with
    sqrt(m_{k-1}) e^{i phi_{k-1}}, each port taking a T/4 share.  With equal
    adjacent means this reduces exactly to `mzi_interfere`; the run's first
    slot interferes with vacuum and splits 50:50 with half its energy in
    the not-yet-interfering delayed arm.
    """
    m_cur = current.mean_photons
    if previous is None:
        half = m_cur / 4.0
        return PortIntensities(port1_mean=half, port2_mean=half)
    m_prev = previous.mean_photons
    cross = 2.0 * math.sqrt(m_cur * m_prev) * math.cos(current.phase - previous.phase)
    base = m_cur + m_prev
    return PortIntensities(
        port1_mean=max(0.0, (base + cross) / 4.0),
        port2_mean=max(0.0, (base - cross) / 4.0),
    )


def coupler_split(
    port_mean: float, wavelength_nm: float, coupler: CouplerModel
) -> tuple[float, float]:
    """Split one port's light between its detector pair; outputs sum exactly."""
    if port_mean < 0.0:
        raise ValueError("port_mean must be >= 0")
    r = coupler.ratio(wavelength_nm)
    det_a = r * port_mean
    return det_a, port_mean - det_a
