"""Differential-phase-shift protocol roles and post-processing.

Alice's record is a per-slot {0, pi} phase sequence; the key bit of slot s
is the phase difference to slot s-1 (0 -> bit 0, pi -> bit 1).  Bob's bit
is the port that clicked: detectors 1/2 sit on port 1 (bit 0), detectors
3/4 on port 2 (bit 1).

Sifting keeps slots with exactly one click.  Same-slot double clicks
inside one detector pair are the countermeasure's alarm events: they are
tallied per pair and excluded from the key.  Slots with clicks at both
ports carry no bit and are discarded, as are slot-0 clicks (no
predecessor phase).

The measured conditional coincidence rate of a pair is
2*N_coinc / (N_a + N_b), where each coincidence contributes one click to
each detector's count; the expected rate under honest operation is
estimated as mu*T*eta/4 + d.  The secure key length applies the
individual-attack bound with the estimated attacked-bit fraction
(CCR_measured - CCR_estimated) subtracted from the secure fraction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .rng import SlotRng

PAIR_DETECTORS = {"A": (1, 2), "B": (3, 4)}


class NoDataError(ValueError):
    """An estimator was asked for a quantity with no supporting events."""


@dataclass(frozen=True)
class AliceRecord:
    """Alice's modulation data: one phase (0 or pi) per slot, plus the
    mean photon number per pulse."""

    phases: np.ndarray
    mean_photons_per_pulse: float

    def __len__(self) -> int:
        return len(self.phases)

    def dphi_bit(self, slot: int) -> int:
        """Key bit encoded on slot `slot` (difference to its predecessor)."""
        d = (self.phases[slot] - self.phases[slot - 1]) % (2.0 * math.pi)
        return int(abs(d - math.pi) < 1e-9)


def alice_emit(n_slots: int, mu: float, mode: str, rng: SlotRng) -> AliceRecord:
    """Emit Alice's phase record.

    `random` draws each phase uniformly from {0, pi} from the seeded
    stream; `static_0pi` alternates 0, pi, 0, pi (the attack-emulation
    pattern, whose per-slot key bit is always 1).
    """
    if n_slots < 2:
        raise ValueError("n_slots must be >= 2")
    if mu < 0.0:
        raise ValueError("mu must be >= 0")
    if mode == "random":
        bits = rng.bit_at(np.arange(n_slots, dtype=np.uint64))
    elif mode == "static_0pi":
        bits = (np.arange(n_slots, dtype=np.int64) % 2).astype(np.uint8)
    else:
        raise ValueError(f"unknown alice mode {mode!r}")
    return AliceRecord(phases=bits.astype(np.float64) * math.pi, mean_photons_per_pulse=mu)


@dataclass(frozen=True)
class ClickLog:
    """Time-ordered click record; the single source of truth for estimators."""

    slots: np.ndarray        # int64, non-decreasing
    detector_ids: np.ndarray  # int8 in 1..4; ties in slot are ordered by id

    def __post_init__(self):
        if len(self.slots) != len(self.detector_ids):
            raise ValueError("slots and detector_ids must have equal length")

    def __len__(self) -> int:
        return len(self.slots)

    @classmethod
    def from_events(cls, events) -> "ClickLog":
        slots = np.asarray([e.slot for e in events], dtype=np.int64)
        dets = np.asarray([e.detector_id for e in events], dtype=np.int8)
        order = np.lexsort((dets, slots))
        return cls(slots=slots[order], detector_ids=dets[order])

    def counts_per_detector(self) -> tuple[int, int, int, int]:
        return tuple(int(np.count_nonzero(self.detector_ids == d)) for d in (1, 2, 3, 4))

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            f.write("slot,detector_id\n")
            for s, d in zip(self.slots, self.detector_ids):
                f.write(f"{int(s)},{int(d)}\n")

    @classmethod
    def read_csv(cls, path) -> "ClickLog":
        with open(path, encoding="utf-8") as f:
            rows = [line.split(",") for line in f.read().splitlines()[1:] if line]
        if not rows:
            return cls(np.empty(0, np.int64), np.empty(0, np.int8))
        data = np.asarray(rows, dtype=np.int64)
        return cls(slots=data[:, 0], detector_ids=data[:, 1].astype(np.int8))


@dataclass
class SiftResult:
    """Outcome of sifting a click log against Alice's record.

    Every kept slot had exactly one clicking detector; `coincidence_counts`
    tallies same-slot double clicks within pair A = (Det1, Det2) and
    pair B = (Det3, Det4).  The extra click counters make the accounting
    identity singles + 2*coincidences + multiport_clicks + slot0_clicks
    == total log events testable.
    """

    alice_bits: np.ndarray = field(default_factory=lambda: np.empty(0, np.uint8))
    bob_bits: np.ndarray = field(default_factory=lambda: np.empty(0, np.uint8))
    kept_slots: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))
    coincidence_counts: dict = field(default_factory=lambda: {"A": 0, "B": 0})
    singles_counts: dict = field(default_factory=lambda: {1: 0, 2: 0, 3: 0, 4: 0})
    discarded_multiport: int = 0
    discarded_multiport_clicks: int = 0
    slot0_clicks: int = 0

    def __len__(self) -> int:
        return len(self.kept_slots)


def _classify_slot_events(result, slot_groups):
    """Fold per-slot click groups into a SiftResult's counters; return the
    kept slots and Bob's bits (Alice's bits are the caller's job)."""
    bob_bits = []
    kept = []
    for slot, dets in slot_groups:
        if slot == 0:
            result.slot0_clicks += len(dets)
            continue
        if len(dets) == 1:
            d = dets[0]
            result.singles_counts[d] += 1
            kept.append(slot)
            bob_bits.append(0 if d <= 2 else 1)
            continue
        port1 = any(d <= 2 for d in dets)
        port2 = any(d >= 3 for d in dets)
        if port1 and port2:
            result.discarded_multiport += 1
            result.discarded_multiport_clicks += len(dets)
        elif port1:
            result.coincidence_counts["A"] += 1
        else:
            result.coincidence_counts["B"] += 1
    return kept, bob_bits


def sift(alice: AliceRecord, log: ClickLog) -> SiftResult:
    """Sift a click log into key bits and coincidence statistics."""
    if len(log) and int(log.slots.max()) >= len(alice):
        raise ValueError("click slot beyond Alice's record")
    result = SiftResult()
    groups = []
    i = 0
    slots = log.slots
    dets = log.detector_ids
    n = len(log)
    while i < n:
        j = i
        while j < n and slots[j] == slots[i]:
            j += 1
        groups.append((int(slots[i]), [int(d) for d in dets[i:j]]))
        i = j
    kept, b_bits = _classify_slot_events(result, groups)
    result.kept_slots = np.asarray(kept, dtype=np.int64)
    result.alice_bits = np.asarray(
        [alice.dphi_bit(s) for s in kept], dtype=np.uint8
    )
    result.bob_bits = np.asarray(b_bits, dtype=np.uint8)
    return result


def qber(result: SiftResult) -> float:
    """Bit error rate of the sifted key; undefined on an empty sift."""
    n = len(result)
    if n == 0:
        raise NoDataError("empty sifted key: QBER is undefined")
    return float(np.count_nonzero(result.alice_bits != result.bob_bits)) / n


def ccr_estimate(mu: float, T: float, eta: float, d: float) -> float:
    """Expected conditional coincidence rate under honest operation:
    mu*T*eta/4 + d."""
    if mu < 0.0 or not 0.0 < T <= 1.0 or not 0.0 <= eta <= 1.0 or not 0.0 <= d < 1.0:
        raise ValueError("ccr_estimate arguments out of range")
    return 0.25 * mu * T * eta + d


def ccr_measure(result: SiftResult, pair: str) -> float:
    """Measured conditional coincidence rate of one detector pair.

    2*N_coinc / (N_a + N_b) with each coincidence contributing one click to
    each detector's count; 1.0 iff every click of the pair was coincident.
    """
    det_a, det_b = PAIR_DETECTORS[pair]
    n_coinc = result.coincidence_counts[pair]
    n_a = result.singles_counts[det_a] + n_coinc
    n_b = result.singles_counts[det_b] + n_coinc
    if n_a + n_b == 0:
        raise NoDataError(f"pair {pair} has no clicks: CCR is undefined")
    return 2.0 * n_coinc / (n_a + n_b)


@dataclass(frozen=True)
class KeyRateInputs:
    """Everything the secure-key-length bound consumes."""

    K_sift: int
    mu: float
    T: float
    eta: float
    e: float
    f_e: float = 1.16
    CCR_exp: float = 0.0
    CCR_est: float = 0.0

    def __post_init__(self):
        if self.K_sift < 0:
            raise ValueError("K_sift must be >= 0")
        if self.mu < 0.0 or not 0.0 < self.T <= 1.0 or not 0.0 < self.eta <= 1.0:
            raise ValueError("mu/T/eta out of range")
        if not 0.0 <= self.e < 0.5:
            raise ValueError("e must be in [0, 0.5)")
        if self.f_e < 1.0:
            raise ValueError("f_e must be >= 1")
        if not 0.0 <= self.CCR_exp <= 1.0 or not 0.0 <= self.CCR_est <= 1.0:
            raise ValueError("CCR values must be in [0, 1]")


def binary_entropy(e: float) -> float:
    if e <= 0.0 or e >= 1.0:
        return 0.0
    return -e * math.log2(e) - (1.0 - e) * math.log2(1.0 - e)


def secure_fraction(inputs: KeyRateInputs) -> float:
    """Secure fraction of the sifted key under the individual-attack bound.

    (1 - 2 mu (1 - eta T)) * (-log2(1 - e^2 - (1-6e)^2/2))
      - f(e) h(e) - (CCR_exp - CCR_est)

    Raises ValueError outside the bound's domain (e >= 1/6, or a
    non-positive collision-probability argument).
    """
    e = inputs.e
    if e >= 1.0 / 6.0:
        raise ValueError("secure fraction undefined for e >= 1/6")
    collision_arg = 1.0 - e * e - (1.0 - 6.0 * e) ** 2 / 2.0
    if collision_arg <= 0.0:
        raise ValueError("collision-probability log argument <= 0")
    coeff = 1.0 - 2.0 * inputs.mu * (1.0 - inputs.eta * inputs.T)
    return (
        coeff * (-math.log2(collision_arg))
        - inputs.f_e * binary_entropy(e)
        - (inputs.CCR_exp - inputs.CCR_est)
    )


def secure_key_length(inputs: KeyRateInputs) -> int:
    """max(0, floor(K_sift * secure_fraction)); 0 when the bound is
    violated or outside its domain."""
    try:
        s = secure_fraction(inputs)
    except ValueError:
        return 0
    return max(0, math.floor(inputs.K_sift * s))


def attack_fraction_estimate(CCR_exp: float, CCR_est: float) -> float:
    """Fraction of bits under detector control implied by the coincidence
    excess, clamped to [0, 1]."""
    if not 0.0 <= CCR_exp <= 1.0 or not 0.0 <= CCR_est <= 1.0:
        raise ValueError("CCR values must be in [0, 1]")
    if CCR_est == 1.0:
        raise ValueError("CCR_est = 1 leaves the attacked fraction undetermined")
    return min(1.0, max(0.0, (CCR_exp - CCR_est) / (1.0 - CCR_est)))


@dataclass(frozen=True)
class PairBalance:
    detector_counts: tuple[int, int]
    z_score: float
    flagged: bool


def detector_statistics_check(result: SiftResult, tolerance_sigma: float) -> dict:
    """Flag pairs whose singles counts are unbalanced beyond tolerance.

    Under an even split the count difference has standard deviation
    sqrt(n_a + n_b); a detuned-wavelength attack that blinds only one
    detector of a pair shows up here.
    """
    total = sum(result.singles_counts.values())
    if total < 100:
        raise ValueError("need >= 100 clicks for a balance check")
    out = {}
    for pair, (det_a, det_b) in PAIR_DETECTORS.items():
        n_a = result.singles_counts[det_a]
        n_b = result.singles_counts[det_b]
        n = n_a + n_b
        z = abs(n_a - n_b) / math.sqrt(n) if n else 0.0
        out[pair] = PairBalance(
            detector_counts=(n_a, n_b), z_score=z, flagged=z > tolerance_sigma
        )
    return out
