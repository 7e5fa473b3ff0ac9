"""Independent reference implementations used to check the package.

Everything here is deliberately written in a different style from the
production code (scalar loops, dicts, complex amplitudes) so the two
routes share no code.  The secure-fraction evaluator predates the main
implementation and its frozen outputs are asserted in the acceptance
tests.
"""

from __future__ import annotations

import cmath
import math
from collections import defaultdict

_M64 = (1 << 64) - 1


def splitmix64_outputs(seed: int, n: int) -> list[int]:
    """First n outputs of the reference splitmix64 generator."""
    out = []
    state = seed & _M64
    for _ in range(n):
        state = (state + 0x9E3779B97F4A7C15) & _M64
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _M64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _M64
        out.append((z ^ (z >> 31)) & _M64)
    return out


def mzi_ports_by_amplitude(phases, means=None, alpha: float = 1.0):
    """Per-slot output-port intensities of a one-slot-delay interferometer,
    evaluated directly on complex amplitudes.

    Slot k combines sqrt(m_k) e^{i phi_k} with its predecessor (vacuum for
    the first slot); each port takes |E_k +/- E_{k-1}|^2 / 4.
    """
    n = len(phases)
    if means is None:
        means = [alpha * alpha] * n
    port1, port2 = [], []
    prev = 0j
    for k in range(n):
        cur = math.sqrt(means[k]) * cmath.exp(1j * phases[k])
        port1.append(abs(cur + prev) ** 2 / 4.0)
        port2.append(abs(cur - prev) ** 2 / 4.0)
        prev = cur
    return port1, port2


def brute_sift(alice_parity, clicks):
    """Reference sift over (slot, detector) click pairs.

    alice_parity: sequence of 0/1 phase parities per slot.
    Returns a dict of counters plus the per-slot kept bits.
    """
    by_slot = defaultdict(list)
    for slot, det in clicks:
        by_slot[slot].append(det)
    res = {
        "singles": {1: 0, 2: 0, 3: 0, 4: 0},
        "coinc": {"A": 0, "B": 0},
        "multiport_slots": 0,
        "multiport_clicks": 0,
        "slot0_clicks": 0,
        "kept": [],
        "alice_bits": [],
        "bob_bits": [],
    }
    for slot in sorted(by_slot):
        dets = by_slot[slot]
        if slot == 0:
            res["slot0_clicks"] += len(dets)
            continue
        if len(dets) == 1:
            det = dets[0]
            res["singles"][det] += 1
            res["kept"].append(slot)
            res["bob_bits"].append(0 if det in (1, 2) else 1)
            res["alice_bits"].append(alice_parity[slot] ^ alice_parity[slot - 1])
        else:
            has1 = any(d in (1, 2) for d in dets)
            has2 = any(d in (3, 4) for d in dets)
            if has1 and has2:
                res["multiport_slots"] += 1
                res["multiport_clicks"] += len(dets)
            elif has1:
                res["coinc"]["A"] += 1
            else:
                res["coinc"]["B"] += 1
    return res


def brute_qber(res) -> float:
    errors = sum(a != b for a, b in zip(res["alice_bits"], res["bob_bits"]))
    return errors / len(res["alice_bits"])


def binary_entropy(e: float) -> float:
    if e == 0.0 or e == 1.0:
        return 0.0
    return -e * math.log2(e) - (1.0 - e) * math.log2(1.0 - e)


def secure_fraction_reference(
    mu: float, eta_T: float, e: float, f_e: float, delta_ccr: float
) -> float:
    """Term-by-term evaluation of the individual-attack secure fraction."""
    collision_arg = 1.0 - e * e - (1.0 - 6.0 * e) ** 2 / 2.0
    if collision_arg <= 0.0:
        raise ValueError("log argument <= 0")
    shrink = -math.log2(collision_arg)
    coeff = 1.0 - 2.0 * mu * (1.0 - eta_T)
    return coeff * shrink - f_e * binary_entropy(e) - delta_ccr


# Frozen evaluations of the reference (computed once, asserted in tests).
SECURE_FRACTION_E0 = 0.6006339999999999  # mu=0.2, eta_T=1.585e-3, e=0, dCCR=0
SECURE_FRACTION_E032 = 0.10663588252440864  # e=0.032, f=1.16, dCCR=9e-5
