"""Eve: bright-light detector-control pulse programs.

The attack holds all four of Bob's detectors latched high with a bright
pulse stream whose phases repeat the {0, 0, pi, pi} pattern, so the phase
difference alternates 0, pi and the light alternates between the two
interferometer ports every slot -- each detector is refreshed fast enough
that it never recovers, and no pi/2 modulation is needed.  To force a
click, Eve routes the stream away from one port for a recovery window,
lets that port's detector pair become clickable, then ends the cycle with
one bright slot routed back at the recovered pair: both of its detectors
fire on the rising edge, in the same slot, and latch again.

One cycle (blinding + window + re-blinding edge) serves one bit.  Each
attacked cycle contains its own re-blinding edge as its final slot, so a
cycle produces its fake click regardless of whether the next cycle is
attacked or passes Alice's genuine light through.

Phases are tracked as pi-parities (phase = pi * bit); every program phase
is 0 or pi.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .protocol import AliceRecord
from .rng import SlotRng

PORT1, PORT2 = 1, 2


@dataclass(frozen=True)
class AttackConfig:
    enabled: bool = False
    mode: str = "emulation"  # emulation | intercept_resend
    # Stream power at the interferometer input.  Routing sends the full
    # stream to one port whose coupler halves it, so 5e4 here puts 2.5e4 on
    # each detector of the lit pair -- the blinding threshold.
    blind_photons_per_slot: float = 5.0e4
    blinding_slots: int = 9990
    recovery_window_slots: int = 10
    attacked_fraction: float = 1.0
    blind_wavelength_nm: float = 1551.0

    def __post_init__(self):
        if self.mode not in ("emulation", "intercept_resend"):
            raise ValueError(f"unknown attack mode {self.mode!r}")
        if self.blind_photons_per_slot <= 0.0:
            raise ValueError("blind_photons_per_slot must be > 0")
        if self.blinding_slots < 4:
            raise ValueError("blinding_slots must be >= 4")
        if self.recovery_window_slots < 1:
            raise ValueError("recovery_window_slots must be >= 1")
        if not 0.0 <= self.attacked_fraction <= 1.0:
            raise ValueError("attacked_fraction must be in [0, 1]")

    @property
    def cycle_slots(self) -> int:
        return self.blinding_slots + self.recovery_window_slots


@dataclass(frozen=True)
class EveMeasurement:
    """Per-slot outcomes of Eve's ideal interferometer at Alice's output:
    0 = no click, 1 = port 1 (phase difference 0), 2 = port 2 (pi)."""

    outcomes: np.ndarray

    def outcome_at(self, slot: int) -> int:
        return int(self.outcomes[slot])


def alice_parity_bits(alice: AliceRecord) -> np.ndarray:
    """Alice's phases as pi-parities (0 -> 0, pi -> 1)."""
    return (np.rint(alice.phases / math.pi).astype(np.int64) & 1).astype(np.uint8)


def eve_measure(alice: AliceRecord, rng: SlotRng) -> EveMeasurement:
    """Measure Alice's pulse train with ideal apparatus (unit efficiency,
    lossless, dark-free) before the channel; a slot clicks with probability
    1 - e^{-mu} and the outcome port is determined by its phase difference.
    """
    n = len(alice)
    p_click = 1.0 - math.exp(-alice.mean_photons_per_pulse)
    u = rng.uniform_at(np.arange(n, dtype=np.uint64))
    parity = alice_parity_bits(alice)
    dphi = np.zeros(n, dtype=np.int8)
    dphi[1:] = parity[1:] ^ parity[:-1]
    outcomes = np.where(u < p_click, np.where(dphi == 0, PORT1, PORT2), 0).astype(np.int8)
    outcomes[0] = 0  # no predecessor phase
    return EveMeasurement(outcomes=outcomes)


@dataclass(frozen=True)
class PulseProgram:
    """Per-slot channel output substituted by Eve (or passed through)."""

    mean_photons: np.ndarray
    phase: np.ndarray
    wavelength_nm: np.ndarray

    def __len__(self) -> int:
        return len(self.mean_photons)

    def write_csv(self, path, start_slot: int = 0) -> None:
        with open(path, "w", encoding="utf-8") as f:
            f.write("slot,mean_photons,phase,wavelength_nm\n")
            for i in range(len(self)):
                f.write(
                    f"{start_slot + i},{float(self.mean_photons[i])!r},"
                    f"{float(self.phase[i])!r},{float(self.wavelength_nm[i])!r}\n"
                )


def _blinding_parity(j, entry_parity):
    """Parity of blinding-slot offset j, entered with `entry_parity` on the
    preceding slot: the first slot flips (difference pi), then differences
    alternate 0, pi -- the {0,0,pi,pi} repetition."""
    return (entry_parity ^ ((j // 2 + 1) & 1)).astype(np.uint8)


def build_blinding_segment(
    n_slots: int, cfg: AttackConfig, previous_phase: float = math.pi
) -> PulseProgram:
    """Bright {0,0,pi,pi}-patterned stream; consecutive phase differences
    alternate pi, 0, so the light alternates ports every slot."""
    if n_slots < 4:
        raise ValueError("blinding segment needs n_slots >= 4")
    entry = round(previous_phase / math.pi) & 1
    parity = _blinding_parity(np.arange(n_slots, dtype=np.int64), entry)
    return PulseProgram(
        mean_photons=np.full(n_slots, cfg.blind_photons_per_slot),
        phase=parity.astype(np.float64) * math.pi,
        wavelength_nm=np.full(n_slots, cfg.blind_wavelength_nm),
    )


def build_recovery_window(
    target_port: int, n_slots: int, cfg: AttackConfig, previous_phase: float = 0.0
) -> PulseProgram:
    """Darken `target_port` for `n_slots` while keeping the other port bright.

    Recovering port 2 takes a constant phase (difference 0 routes all light
    to port 1); recovering port 1 takes alternating phases (difference pi
    every slot routes all light to port 2).  The first slot continues from
    `previous_phase` so no unintended transient difference occurs.
    """
    if n_slots < 1:
        raise ValueError("recovery window needs n_slots >= 1")
    if target_port not in (PORT1, PORT2):
        raise ValueError("target_port must be 1 or 2")
    entry = round(previous_phase / math.pi) & 1
    i = np.arange(n_slots, dtype=np.int64)
    if target_port == PORT2:
        parity = np.full(n_slots, entry, dtype=np.uint8)
    else:
        parity = (entry ^ ((i + 1) & 1)).astype(np.uint8)
    return PulseProgram(
        mean_photons=np.full(n_slots, cfg.blind_photons_per_slot),
        phase=parity.astype(np.float64) * math.pi,
        wavelength_nm=np.full(n_slots, cfg.blind_wavelength_nm),
    )


class AttackPlan:
    """Per-cycle schedule plus closed-form slot fields for the whole run.

    Cycle k covers slots [k*C, (k+1)*C).  An attacked, served cycle is
    blinding for C - W - 1 slots, a W-slot recovery window, and one
    re-blinding slot aimed at the target pair.  Attacked cycles without an
    Eve outcome at their re-blinding slot (intercept mode on a lossy
    source), and cycles truncated by the end of the run, blind throughout.
    Pass-through cycles carry Alice's genuine attenuated pulses.

    `alice_parity_at` maps slot indices to Alice's phase parities;
    `eve_outcome_at` maps a slot index to Eve's outcome there (0/1/2) and
    is consulted only in intercept mode.
    """

    def __init__(
        self,
        cfg: AttackConfig,
        n_slots: int,
        signal_mean: float,
        signal_wavelength_nm: float,
        alice_parity_at,
        cycle_rng: SlotRng,
        eve_outcome_at=None,
    ):
        if cfg.mode == "intercept_resend" and eve_outcome_at is None:
            raise ValueError("intercept_resend needs Eve's measurement outcomes")
        self.cfg = cfg
        self.n_slots = n_slots
        self.signal_mean = signal_mean
        self.signal_wavelength_nm = signal_wavelength_nm
        self.alice_parity_at = alice_parity_at
        C = cfg.cycle_slots
        self.n_cycles = (n_slots + C - 1) // C

        q = cfg.attacked_fraction
        if q >= 1.0:
            attacked = np.ones(self.n_cycles, dtype=bool)
        elif q <= 0.0:
            attacked = np.zeros(self.n_cycles, dtype=bool)
        else:
            attacked = cycle_rng.uniform_at(np.arange(self.n_cycles, dtype=np.uint64)) < q
        self.attacked = attacked

        self.targets = np.zeros(self.n_cycles, dtype=np.int8)  # 0 = unserved
        self.entry_parity = np.zeros(self.n_cycles, dtype=np.uint8)
        parity = 0  # parity of the slot preceding the cycle
        for k in range(self.n_cycles):
            self.entry_parity[k] = parity
            start = k * C
            if not attacked[k]:
                last = min(start + C, n_slots) - 1
                parity = int(alice_parity_at(last))
                continue
            target = 0
            if start + C <= n_slots:
                edge_slot = start + C - 1
                if cfg.mode == "emulation":
                    target = PORT2
                else:
                    target = int(eve_outcome_at(edge_slot))
            self.targets[k] = target
            if target == 0:
                parity ^= ((C - 1) // 2 + 1) & 1  # blinding throughout
            elif target == PORT1:
                parity ^= (cfg.recovery_window_slots & 1) ^ 1
            # target PORT2: the edge slot's parity equals the entry parity
        self.served_cycles = int(np.count_nonzero(self.targets))

    def _attacked_cycle_parity(self, j: np.ndarray, p0: int, target: int) -> np.ndarray:
        """Parity at within-cycle offsets j of an attacked cycle."""
        C = self.cfg.cycle_slots
        W = self.cfg.recovery_window_slots
        blind_len = C - W - 1
        if target == 0:
            return _blinding_parity(j, p0)
        parity = np.empty(len(j), dtype=np.uint8)
        in_blind = j < blind_len
        parity[in_blind] = _blinding_parity(j[in_blind], p0)
        in_window = (j >= blind_len) & (j < C - 1)
        if target == PORT2:
            parity[in_window] = p0 ^ 1
        else:
            i = j[in_window] - blind_len
            parity[in_window] = ((p0 ^ 1) ^ ((i + 1) & 1)).astype(np.uint8)
        edge = j == C - 1
        parity[edge] = p0 if target == PORT2 else (p0 ^ 1) ^ (W & 1)
        return parity

    def channel_fields(self, lo: int, hi: int):
        """(mean, parity, wavelength) arrays for slots [lo, hi)."""
        n = hi - lo
        mean = np.empty(n, dtype=np.float64)
        parity = np.empty(n, dtype=np.uint8)
        lam = np.empty(n, dtype=np.float64)
        C = self.cfg.cycle_slots
        k = lo // C
        pos = lo
        while pos < hi:
            start = k * C
            end = min(start + C, hi)
            seg = slice(pos - lo, end - lo)
            if self.attacked[k]:
                j = np.arange(pos - start, end - start, dtype=np.int64)
                mean[seg] = self.cfg.blind_photons_per_slot
                lam[seg] = self.cfg.blind_wavelength_nm
                parity[seg] = self._attacked_cycle_parity(
                    j, int(self.entry_parity[k]), int(self.targets[k])
                )
            else:
                mean[seg] = self.signal_mean
                lam[seg] = self.signal_wavelength_nm
                parity[seg] = self.alice_parity_at(np.arange(pos, end, dtype=np.int64))
            pos = end
            k += 1
        return mean, parity, lam


def assemble_attack_program(
    measurements: EveMeasurement | None,
    cfg: AttackConfig,
    n_slots: int,
    alice: AliceRecord,
    channel_loss_dB: float = 18.0,
    signal_wavelength_nm: float = 1551.0,
    cycle_rng: SlotRng | None = None,
) -> PulseProgram:
    """Materialize the full channel-output program Bob will see.

    In intercept mode Eve's outcome at each cycle's re-blinding slot picks
    the target pair; emulation mode serves port 2 every attacked cycle.
    Pass-through cycles (attacked_fraction < 1, decided per cycle from
    `cycle_rng`) carry Alice's pulses attenuated by the channel loss.
    """
    if cfg.mode == "intercept_resend" and measurements is None:
        raise ValueError("intercept_resend needs Eve's measurements")
    parity = alice_parity_bits(alice)

    def parity_at(s):
        return parity[np.asarray(s, dtype=np.int64)]

    plan = AttackPlan(
        cfg,
        n_slots,
        alice.mean_photons_per_pulse * 10.0 ** (-channel_loss_dB / 10.0),
        signal_wavelength_nm,
        parity_at,
        cycle_rng or SlotRng(0),
        eve_outcome_at=measurements.outcome_at if measurements is not None else None,
    )
    mean, pbits, lam = plan.channel_fields(0, n_slots)
    return PulseProgram(
        mean_photons=mean, phase=pbits.astype(np.float64) * math.pi, wavelength_nm=lam
    )


def validate_against_detectors(cfg: AttackConfig, recovery_slots: int) -> None:
    """Warn when the recovery window is too short for the detectors to
    become clickable -- a failing attack is a legitimate scenario."""
    if cfg.enabled and cfg.recovery_window_slots < recovery_slots:
        warnings.warn(
            f"recovery window of {cfg.recovery_window_slots} slots is shorter than "
            f"the detector recovery of {recovery_slots}; fake clicks will not fire",
            stacklevel=2,
        )
