"""Scenario runner: source/attack -> channel -> filter -> interferometer ->
couplers -> four detectors -> click log -> metrics.

A run is strictly sequential over slots but processed in vectorized
chunks; every random draw is counter-based (see `rng`), so the click log
and metrics are byte-identical for a given config regardless of chunking
or sweep parallelism.

Default calibration
-------------------
The stock link is 0.2 photons per pulse through 18 dB of loss at a 1 GHz
clock.  Detector efficiency and dark rate are set so the honest
conditional-coincidence estimate mu*T*eta/4 + d lands exactly on 5.0e-5,
and the interferometer-imperfection knob (a per-slot phase-flip
probability on Bob's inferred phase difference) is tuned so the simulated
QBER centers on 3.2%:

    qber = (d + flip * p_click) / (p_click + 2 d),
    p_click = 1 - exp(-(mu T / 2) eta)

With eta = 0.06: d = 5.0e-5 - mu*T*eta/4 = 2.4532e-6 and flip = 7.852e-3.
(A 10% device efficiency with ~2 dB of receiver insertion loss gives the
same effective eta; only the product matters here.)
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .attack import AttackConfig, AttackPlan, PORT1, PORT2, validate_against_detectors
from .detector import BlockState, DetectorParams, simulate_block
from .optics import BandpassFilter, CouplerModel
from .protocol import (
    ClickLog,
    KeyRateInputs,
    NoDataError,
    SiftResult,
    _classify_slot_events,
    attack_fraction_estimate,
    ccr_estimate,
    ccr_measure,
    qber,
    secure_fraction,
)
from .rng import RunStreams, SlotRng, child_seed

CHUNK_SLOTS = 1 << 20

DEFAULT_MU = 0.2
DEFAULT_LOSS_DB = 18.0
DEFAULT_EFFICIENCY = 0.06
CCR_TARGET = 5.0e-5
DEFAULT_DARK_PROB = CCR_TARGET - 0.25 * DEFAULT_MU * 10.0 ** (
    -DEFAULT_LOSS_DB / 10.0
) * DEFAULT_EFFICIENCY
DEFAULT_PHASE_FLIP_PROB = 7.852123187681173e-3


def default_detector() -> DetectorParams:
    return DetectorParams(
        efficiency=DEFAULT_EFFICIENCY, dark_prob_per_slot=DEFAULT_DARK_PROB
    )


class ConfigError(ValueError):
    """Invalid scenario configuration; `path` names the offending key."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass(frozen=True)
class ScenarioConfig:
    clock_hz: float = 1e9
    n_slots: int = 10_000_000
    mu: float = DEFAULT_MU
    channel_loss_dB: float = DEFAULT_LOSS_DB
    phase_flip_prob: float = DEFAULT_PHASE_FLIP_PROB
    signal_wavelength_nm: float = 1551.0
    filter: BandpassFilter = field(default_factory=BandpassFilter)
    coupler: CouplerModel = field(default_factory=CouplerModel)
    detectors: tuple[DetectorParams, ...] = field(
        default_factory=lambda: tuple(default_detector() for _ in range(4))
    )
    attack: AttackConfig = field(default_factory=AttackConfig)
    alice_mode: str = "random"
    seed: int = 20260808
    error_correction_f: float = 1.16
    alarm_fraction_threshold: float = 0.05

    @property
    def transmission(self) -> float:
        return 10.0 ** (-self.channel_loss_dB / 10.0)

    def validate(self) -> None:
        if self.clock_hz <= 0.0:
            raise ConfigError("clock_hz", "must be > 0")
        if self.n_slots < 2:
            raise ConfigError("n_slots", "must be >= 2")
        if self.mu < 0.0:
            raise ConfigError("mu", "must be >= 0")
        if self.channel_loss_dB < 0.0:
            raise ConfigError("channel_loss_dB", "must be >= 0 (gain is not modeled)")
        if not 0.0 <= self.phase_flip_prob <= 1.0:
            raise ConfigError("phase_flip_prob", "must be in [0, 1]")
        if self.signal_wavelength_nm <= 0.0:
            raise ConfigError("signal_wavelength_nm", "must be > 0")
        if len(self.detectors) != 4:
            raise ConfigError("detectors", "exactly four detectors required")
        if self.alice_mode not in ("random", "static_0pi"):
            raise ConfigError("alice_mode", "must be 'random' or 'static_0pi'")
        if not 0.0 <= self.alarm_fraction_threshold <= 1.0:
            raise ConfigError("alarm_fraction_threshold", "must be in [0, 1]")
        if self.error_correction_f < 1.0:
            raise ConfigError("error_correction_f", "must be >= 1")
        if not isinstance(self.seed, int) or not -(2**63) <= self.seed < 2**64:
            raise ConfigError("seed", "must be a 64-bit integer")
        validate_against_detectors(
            self.attack, max(d.recovery_slots for d in self.detectors)
        )


@dataclass(frozen=True)
class RunMetrics:
    qber: float
    ccr_pair_A: float | None
    ccr_pair_B: float | None
    ccr_est: float
    count_rates_cps: tuple[float, float, float, float]
    singles: tuple[int, int, int, int]
    coincidences: tuple[int, int]
    K_sift: int
    K_sec: int
    attack_fraction_est: float
    abort: bool
    abort_reason: str

    def to_json_dict(self) -> dict:
        return {
            "qber": self.qber,
            "ccr_pair_A": self.ccr_pair_A,
            "ccr_pair_B": self.ccr_pair_B,
            "ccr_est": self.ccr_est,
            "count_rates_cps": list(self.count_rates_cps),
            "singles": list(self.singles),
            "coincidences": list(self.coincidences),
            "K_sift": self.K_sift,
            "K_sec": self.K_sec,
            "attack_fraction_est": self.attack_fraction_est,
            "abort": self.abort,
            "abort_reason": self.abort_reason,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, indent=2) + "\n"


class _AliceSource:
    """Slot-indexed access to Alice's phase parities and key bits."""

    def __init__(self, mode: str, rng: SlotRng):
        self.mode = mode
        self.rng = rng

    def parity_at(self, slots):
        s = np.asarray(slots, dtype=np.int64)
        if self.mode == "random":
            return self.rng.bit_at(s.astype(np.uint64))
        return (s % 2).astype(np.uint8)

    def key_bits_at(self, slots: np.ndarray) -> np.ndarray:
        """Key bits of slots >= 1 (phase difference to the predecessor)."""
        if self.mode == "static_0pi":
            return np.ones(len(slots), dtype=np.uint8)
        return self.parity_at(slots) ^ self.parity_at(slots - 1)


class _SiftAccumulator:
    """Streaming sift: classifies each chunk's click slots as they appear,
    using the same per-slot classifier as `protocol.sift`."""

    def __init__(self, alice: _AliceSource):
        self.alice = alice
        self.result = SiftResult()
        self._kept = []
        self._bob_bits = []

    def add_chunk(self, slots: np.ndarray, dets: np.ndarray) -> None:
        if len(slots) == 0:
            return
        groups = []
        boundaries = np.flatnonzero(np.diff(slots)) + 1
        start = 0
        for end in list(boundaries) + [len(slots)]:
            groups.append((int(slots[start]), [int(d) for d in dets[start:end]]))
            start = end
        kept, b_bits = _classify_slot_events(self.result, groups)
        self._kept.extend(kept)
        self._bob_bits.extend(b_bits)

    def finish(self) -> SiftResult:
        kept = np.asarray(self._kept, dtype=np.int64)
        self.result.kept_slots = kept
        self.result.alice_bits = self.alice.key_bits_at(kept)
        self.result.bob_bits = np.asarray(self._bob_bits, dtype=np.uint8)
        return self.result


def run_scenario(cfg: ScenarioConfig) -> tuple[ClickLog, RunMetrics]:
    """Run one scenario and compute its metrics.

    Identical configs (seed included) produce identical click logs and
    metrics.
    """
    cfg.validate()
    streams = RunStreams(cfg.seed)
    alice = _AliceSource(cfg.alice_mode, streams.alice)
    T = cfg.transmission
    signal_mean = cfg.mu * T

    plan = None
    if cfg.attack.enabled:
        eve_outcome_at = None
        if cfg.attack.mode == "intercept_resend":
            p_eve = 1.0 - math.exp(-cfg.mu)

            def eve_outcome_at(slot: int) -> int:
                if float(streams.eve.uniform_at(slot)) >= p_eve:
                    return 0
                same = int(alice.parity_at(slot)) == int(alice.parity_at(slot - 1))
                return PORT1 if same else PORT2

        plan = AttackPlan(
            cfg.attack,
            cfg.n_slots,
            signal_mean,
            cfg.signal_wavelength_nm,
            alice.parity_at,
            streams.cycles,
            eve_outcome_at,
        )

    filt = cfg.filter
    coupler = cfg.coupler
    det_params = cfg.detectors
    det_states = [BlockState() for _ in range(4)]
    acc = _SiftAccumulator(alice)
    log_slots, log_dets = [], []

    mean_prev = 0.0
    amp_prev = 0.0
    parity_prev = np.uint8(0)
    const_mean = None  # reused buffer for attack-free chunks

    lo = 0
    try:
        for lo in range(0, cfg.n_slots, CHUNK_SLOTS):
            hi = min(lo + CHUNK_SLOTS, cfg.n_slots)
            n = hi - lo
            slots = np.arange(lo, hi, dtype=np.int64)
            slots64 = slots.astype(np.uint64)

            if plan is not None:
                mean, parity, lam = plan.channel_fields(lo, hi)
            else:
                if const_mean is None or len(const_mean) != n:
                    const_mean = np.full(n, signal_mean)
                mean = const_mean
                parity = alice.parity_at(slots)
                lam = None  # uniform signal wavelength

            if filt.enabled:
                lam_arr = np.full(n, cfg.signal_wavelength_nm) if lam is None else lam
                out_of_band = np.abs(lam_arr - filt.center_nm) > filt.width_nm / 2.0
                if out_of_band.any():
                    mean = np.where(
                        out_of_band,
                        mean * 10.0 ** (-filt.out_of_band_suppression_dB / 10.0),
                        mean,
                    )

            # Interferometer: combine each slot's amplitude with its predecessor.
            amp = np.sqrt(mean)
            amp_shift = np.empty_like(amp)
            amp_shift[0] = amp_prev
            amp_shift[1:] = amp[:-1]
            mean_shift = np.empty_like(mean)
            mean_shift[0] = mean_prev
            mean_shift[1:] = mean[:-1]
            dparity = np.empty_like(parity)
            dparity[0] = parity[0] ^ parity_prev
            dparity[1:] = parity[1:] ^ parity[:-1]
            if cfg.phase_flip_prob > 0.0:
                flips = streams.flip.uniform_at(slots64) < cfg.phase_flip_prob
                dparity = dparity ^ flips
            cos_dphi = 1.0 - 2.0 * dparity.astype(np.float64)
            cross = 2.0 * amp * amp_shift * cos_dphi
            base = mean + mean_shift
            port1 = (base + cross) * 0.25
            port2 = (base - cross) * 0.25
            np.maximum(port1, 0.0, out=port1)
            np.maximum(port2, 0.0, out=port2)

            if coupler.ratio_slope_per_nm == 0.0 or lam is None:
                r = coupler.ratio(cfg.signal_wavelength_nm if lam is None else lam[0])
                r = float(r)
            else:
                r = np.clip(
                    0.5 + coupler.ratio_slope_per_nm * (lam - coupler.center_wavelength_nm),
                    0.0,
                    1.0,
                )
            incidents = (r * port1, (1.0 - r) * port1, r * port2, (1.0 - r) * port2)

            chunk_slots, chunk_dets = [], []
            for i in range(4):
                clicks = simulate_block(
                    incidents[i],
                    lo,
                    det_params[i],
                    det_states[i],
                    streams.detectors[i],
                    slots=slots,
                )
                if len(clicks):
                    chunk_slots.append(clicks)
                    chunk_dets.append(np.full(len(clicks), i + 1, dtype=np.int8))

            if chunk_slots:
                cs = np.concatenate(chunk_slots)
                cd = np.concatenate(chunk_dets)
                order = np.lexsort((cd, cs))
                cs, cd = cs[order], cd[order]
                log_slots.append(cs)
                log_dets.append(cd)
                acc.add_chunk(cs, cd)

            mean_prev = float(mean[-1])
            amp_prev = float(amp[-1])
            parity_prev = parity[-1]
    except Exception as exc:
        hi = min(lo + CHUNK_SLOTS, cfg.n_slots)
        raise RuntimeError(
            f"scenario failed while simulating slots [{lo}, {hi}): {exc}"
        ) from exc

    log = ClickLog(
        slots=np.concatenate(log_slots) if log_slots else np.empty(0, np.int64),
        detector_ids=np.concatenate(log_dets) if log_dets else np.empty(0, np.int8),
    )
    sres = acc.finish()
    return log, compute_metrics(cfg, sres, log)


def compute_metrics(cfg: ScenarioConfig, sres: SiftResult, log: ClickLog) -> RunMetrics:
    """Post-process a sift result and click log into run metrics."""
    duration_s = cfg.n_slots / cfg.clock_hz
    counts = log.counts_per_detector()
    rates = tuple(c / duration_s for c in counts)

    try:
        e = qber(sres)
    except NoDataError:
        e = 0.0  # zero errors out of zero kept bits; K_sift records emptiness

    ccr_pairs = {}
    for pair in ("A", "B"):
        try:
            ccr_pairs[pair] = ccr_measure(sres, pair)
        except NoDataError:
            ccr_pairs[pair] = None

    eta_mean = sum(d.efficiency for d in cfg.detectors) / 4.0
    dark_mean = sum(d.dark_prob_per_slot for d in cfg.detectors) / 4.0
    est = ccr_estimate(cfg.mu, cfg.transmission, eta_mean, dark_mean)

    with_data = [v for v in ccr_pairs.values() if v is not None]
    ccr_exp = max(with_data) if with_data else None
    af = attack_fraction_estimate(ccr_exp, est) if ccr_exp is not None else 0.0

    K_sift = len(sres)
    K_sec = 0
    reason = ""
    if K_sift > 0:
        try:
            inputs = KeyRateInputs(
                K_sift=K_sift,
                mu=cfg.mu,
                T=cfg.transmission,
                eta=eta_mean,
                e=e,
                f_e=cfg.error_correction_f,
                CCR_exp=ccr_exp if ccr_exp is not None else est,
                CCR_est=est,
            )
            s = secure_fraction(inputs)
            K_sec = max(0, math.floor(K_sift * s))
            if s <= 0.0:
                reason = "secure fraction is not positive"
        except ValueError as exc:
            K_sec = 0
            reason = f"secure-key bound undefined: {exc}"
    else:
        reason = "empty sifted key"

    abort = af > cfg.alarm_fraction_threshold or K_sec == 0
    if abort and af > cfg.alarm_fraction_threshold:
        reason = (
            f"attack fraction estimate {af:.4f} exceeds alarm threshold "
            f"{cfg.alarm_fraction_threshold:.4f}"
            + (f"; {reason}" if reason else "")
        )
    if not abort:
        reason = ""

    return RunMetrics(
        qber=e,
        ccr_pair_A=ccr_pairs["A"],
        ccr_pair_B=ccr_pairs["B"],
        ccr_est=est,
        count_rates_cps=rates,
        singles=tuple(sres.singles_counts[d] for d in (1, 2, 3, 4)),
        coincidences=(sres.coincidence_counts["A"], sres.coincidence_counts["B"]),
        K_sift=K_sift,
        K_sec=K_sec,
        attack_fraction_est=af,
        abort=abort,
        abort_reason=reason,
    )


# --- config field paths (shared by sweeps and the CLI's --set) -----------


def _replace_path(obj, parts: list[str], value, path: str):
    if not parts:
        return value
    name = parts[0]
    if isinstance(obj, tuple):
        if name == "*":
            return tuple(_replace_path(item, parts[1:], value, path) for item in obj)
        try:
            idx = int(name)
        except ValueError:
            raise ConfigError(path, f"expected an index or '*', got {name!r}") from None
        if not 0 <= idx < len(obj):
            raise ConfigError(path, f"index {idx} out of range")
        return tuple(
            _replace_path(o, parts[1:], value, path) if i == idx else o
            for i, o in enumerate(obj)
        )
    if not dataclasses.is_dataclass(obj):
        raise ConfigError(path, f"cannot descend into {type(obj).__name__}")
    names = {f.name for f in dataclasses.fields(obj)}
    if name not in names:
        raise ConfigError(path, f"unknown field {name!r}")
    return dataclasses.replace(
        obj, **{name: _replace_path(getattr(obj, name), parts[1:], value, path)}
    )


def config_with(cfg: ScenarioConfig, path: str, value) -> ScenarioConfig:
    """Return a copy of `cfg` with the dotted `path` set to `value`.

    `detectors.*.field` fans out over all four detectors.
    """
    try:
        return _replace_path(cfg, path.split("."), value, path)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(path, str(exc)) from exc


def _get_path(cfg, path: str):
    obj = cfg
    for name in path.split("."):
        if name == "*":
            obj = obj[0]
        elif isinstance(obj, tuple):
            obj = obj[int(name)]
        else:
            obj = getattr(obj, name)
    return obj


def run_sweep(base: ScenarioConfig, axis: str, values) -> list[RunMetrics]:
    """One independent run per value of `axis`; run k's seed derives from
    (base.seed, k), and results are ordered like `values` regardless of
    how many workers execute them."""
    values = list(values)
    if not values:
        raise ValueError("sweep values must be non-empty")
    try:
        current = _get_path(base, axis)
    except (AttributeError, ValueError, IndexError):
        raise ConfigError(axis, "unknown sweep axis") from None
    if not isinstance(current, (int, float)) or isinstance(current, bool):
        raise ConfigError(axis, "sweep axis must name a numeric field")

    configs = [
        dataclasses.replace(
            config_with(base, axis, v), seed=child_seed(base.seed, i)
        )
        for i, v in enumerate(values)
    ]
    for c in configs:
        c.validate()

    max_workers = min(len(configs), os.cpu_count() or 1)
    env_cap = os.environ.get("QKDSIM_THREADS")
    if env_cap:
        max_workers = max(1, min(max_workers, int(env_cap)))

    if max_workers == 1:
        return [run_scenario(c)[1] for c in configs]
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        return [m for _, m in pool.map(lambda c: run_scenario(c), configs)]
