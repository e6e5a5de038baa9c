"""Shaped constellations: Gray-mapped QAM templates, Maxwell-Boltzmann
probability shaping, rate-to-distribution inversion, and pilot framing."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

__all__ = [
    "ConstellationTemplate",
    "ShapedDistribution",
    "FrameConfig",
    "PilotFrame",
    "mb_distribution",
    "solve_nu_for_entropy",
    "insert_pilots",
]

ENTROPY_FLOOR_BITS = 2.0  # below this the shaped 64QAM degenerates to QPSK


def _gray(i: int) -> int:
    return i ^ (i >> 1)


@dataclass(frozen=True)
class ConstellationTemplate:
    """Square M-QAM template, unit average power under uniform probability.

    Bit labels are Gray-mapped per axis: the first half of the bits indexes
    the in-phase level, the second half the quadrature level, so neighboring
    points along either axis differ in exactly one bit.
    """

    points: np.ndarray  # complex, shape (M,)
    labels: np.ndarray  # int, shape (M,), each in [0, M)

    def __post_init__(self):
        M = len(self.points)
        if M < 4 or (M & (M - 1)) or int(math.log2(M)) % 2:
            raise ValueError(f"template size must be an even power of 2, got {M}")
        if len(set(self.labels.tolist())) != M:
            raise ValueError("bit labels must be unique")

    @property
    def M(self) -> int:
        return len(self.points)

    @property
    def bits_per_symbol(self) -> int:
        return int(math.log2(self.M))

    def bit_masks(self) -> np.ndarray:
        """Boolean array (bits_per_symbol, M): entry [j, i] is bit j (MSB
        first) of point i's label."""
        m = self.bits_per_symbol
        shifts = np.arange(m - 1, -1, -1)
        return ((self.labels[None, :] >> shifts[:, None]) & 1).astype(bool)

    @classmethod
    def square_qam(cls, M: int = 64) -> "ConstellationTemplate":
        L = int(round(math.sqrt(M)))
        if L * L != M:
            raise ValueError(f"{M} is not a square QAM size")
        half = int(math.log2(L))
        levels = np.arange(-(L - 1), L, 2)
        norm = math.sqrt(2.0 * (L * L - 1) / 3.0)
        pts = np.empty(M, dtype=complex)
        lab = np.empty(M, dtype=np.int64)
        for ii in range(L):
            for qq in range(L):
                k = ii * L + qq
                pts[k] = (levels[ii] + 1j * levels[qq]) / norm
                lab[k] = (_gray(ii) << half) | _gray(qq)
        return cls(points=pts, labels=lab)


@dataclass(frozen=True)
class ShapedDistribution:
    """Probability mass over a QAM template together with its entropy.

    The entropy in bits/symbol/polarization is the tuning knob of the
    rate-adaptive scheme; `nu` records the Maxwell-Boltzmann parameter the
    distribution was built from (0 means uniform).
    """

    template: ConstellationTemplate
    p: np.ndarray
    nu: float
    entropy_bits: float = field(init=False)

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        if p.shape != (self.template.M,):
            raise ValueError("probability vector does not match template size")
        if abs(p.sum() - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {p.sum()!r}, not 1")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "entropy_bits", entropy_bits(p))

    @property
    def avg_power(self) -> float:
        """Mean constellation power under this distribution."""
        return float(np.sum(self.p * np.abs(self.template.points) ** 2))

    def tx_points(self) -> np.ndarray:
        """Template points rescaled to unit average power under this
        distribution (the alphabet actually put on the channel)."""
        return self.template.points / math.sqrt(self.avg_power)

    def radii(self) -> np.ndarray:
        """Distinct magnitudes of the transmit alphabet, ascending."""
        return np.unique(np.round(np.abs(self.tx_points()), 12))

    def to_dict(self) -> dict:
        return {"M": self.template.M, "nu": self.nu, "p": self.p.tolist()}

    @classmethod
    def from_dict(cls, d: dict, template: ConstellationTemplate | None = None):
        tpl = template or ConstellationTemplate.square_qam(int(d["M"]))
        if tpl.M != int(d["M"]):
            raise ValueError("template size mismatch")
        return cls(template=tpl, p=np.asarray(d["p"], dtype=float), nu=float(d["nu"]))


def entropy_bits(p: np.ndarray) -> float:
    """Shannon entropy in bits; zero-probability points contribute nothing."""
    p = np.asarray(p, dtype=float)
    nz = p[p > 0]
    return float(-np.sum(nz * np.log2(nz)))


def mb_distribution(nu: float, template: ConstellationTemplate) -> ShapedDistribution:
    """Maxwell-Boltzmann distribution p_i proportional to exp(-nu |x_i|^2).

    nu = 0 gives the uniform distribution; increasing nu concentrates mass
    on the low-energy points and decreases entropy monotonically.
    """
    if nu < 0:
        raise ValueError(f"shaping parameter must be >= 0, got {nu}")
    e = np.abs(template.points) ** 2
    w = np.exp(-nu * (e - e.min()))  # shift keeps the largest weight at 1
    p = w / w.sum()
    return ShapedDistribution(template=template, p=p, nu=float(nu))


def solve_nu_for_entropy(
    h_target: float, template: ConstellationTemplate, tol_bits: float = 1e-9
) -> float:
    """Invert the entropy(nu) map by bisection.

    Valid targets lie in [ENTROPY_FLOOR_BITS, log2(M)]; entropy is strictly
    decreasing in nu, approaching log2 of the innermost-ring size from above.
    """
    h_max = math.log2(template.M)
    if not ENTROPY_FLOOR_BITS <= h_target <= h_max:
        raise ValueError(
            f"target entropy {h_target} outside [{ENTROPY_FLOOR_BITS}, {h_max}]"
        )
    if h_target == h_max:
        return 0.0

    def h(nu):
        return mb_distribution(nu, template).entropy_bits

    lo, hi = 0.0, 1.0
    while h(hi) > h_target and hi < 1e6:
        lo, hi = hi, hi * 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        hm = h(mid)
        if abs(hm - h_target) <= tol_bits:
            return mid
        if hm > h_target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class FrameConfig:
    """Static rate structure of the transmitted frame."""

    fec_rate: Fraction = Fraction(5, 6)
    pilot_rate: Fraction = Fraction(15, 16)
    gross_symbol_rate: int = 64_000_000_000  # symbols/s
    block_length_symbols: int = 960  # CCDM block size, divisible by 64

    def __post_init__(self):
        if not 0 < self.fec_rate <= 1 or not 0 < self.pilot_rate < 1:
            raise ValueError("rates must lie in (0, 1]")
        if self.block_length_symbols < 1:
            raise ValueError("block length must be positive")

    @property
    def net_symbol_rate(self) -> Fraction:
        """Payload symbol rate after FEC and pilot overhead, exact."""
        return self.gross_symbol_rate * self.fec_rate * self.pilot_rate


_QPSK = np.array([1 + 1j, -1 + 1j, -1 - 1j, 1 - 1j]) / math.sqrt(2)


@dataclass(frozen=True)
class PilotFrame:
    """Pilot-bearing symbol frame plus the metadata a receiver needs."""

    symbols: np.ndarray  # complex, payload with pilots interleaved
    pilot_mask: np.ndarray  # bool, True at pilot positions
    pilot_rate: Fraction
    seed: int  # regenerates the pilot sequence

    @property
    def n_pilots(self) -> int:
        return int(self.pilot_mask.sum())

    def payload(self) -> np.ndarray:
        return self.symbols[~self.pilot_mask]

    def pilots(self) -> np.ndarray:
        return self.symbols[self.pilot_mask]


def _pilot_slots(num: int, den: int) -> set[int]:
    # den slots per frame, den-num of them pilots, spread evenly from slot 0
    n_p = den - num
    return {(i * den) // n_p for i in range(n_p)}


def insert_pilots(
    payload: np.ndarray,
    pilot_rate: Fraction | tuple[int, int],
    avg_power: float,
    seed: int = 0,
) -> PilotFrame:
    """Interleave seeded pseudo-random QPSK pilots into a payload stream.

    For rate P/(P+1) one pilot leads every P payload symbols; pilots are
    scaled so |pilot|^2 equals `avg_power`, leaving the frame's average
    power untouched.
    """
    if isinstance(pilot_rate, tuple):
        pilot_rate = Fraction(*pilot_rate)
    if not 0 < pilot_rate < 1:
        raise ValueError(f"pilot rate must lie in (0, 1), got {pilot_rate}")
    payload = np.asarray(payload)
    if payload.size == 0:
        raise ValueError("payload is empty")

    num, den = pilot_rate.numerator, pilot_rate.denominator
    slots = _pilot_slots(num, den)
    rng = np.random.default_rng(seed)

    out, mask = [], []
    pos = 0
    while pos < payload.size:
        chunk = payload[pos : pos + num]
        it = iter(chunk)
        emitted = 0
        for s in range(den):
            if s in slots:
                out.append(None)  # pilot placeholder, filled below
                mask.append(True)
            else:
                try:
                    out.append(next(it))
                except StopIteration:
                    break
                mask.append(False)
                emitted += 1
        pos += emitted
    mask = np.asarray(mask, dtype=bool)
    n_pilots = int(mask.sum())
    pilots = _QPSK[rng.integers(0, 4, n_pilots)] * math.sqrt(avg_power)

    symbols = np.empty(len(out), dtype=complex)
    symbols[mask] = pilots
    symbols[~mask] = payload
    return PilotFrame(symbols=symbols, pilot_mask=mask, pilot_rate=pilot_rate, seed=seed)
