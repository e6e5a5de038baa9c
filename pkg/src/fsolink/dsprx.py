"""Coherent receiver DSP at 2 samples/symbol: matched filtering,
Gram-Schmidt IQ orthogonalization, a CMA/radius-directed 2x2 butterfly,
pilot-based frequency recovery and carrier phase estimation, and a 4x4
real-valued LMS stage, plus the block simulator that drives the chain.

The chain is data-aided only where a real receiver could be: a known
training prefix, the pilot sequence, and (for final scoring) the transmitted
payload. Payload knowledge is never used for adaptation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import ImpairmentConfig, apply_impairments, awgn_transmit
from .metrics import (
    MetricReport,
    evm_percent,
    gmi_from_samples,
    ngmi,
    snr_from_evm,
)
from .shaping import ShapedDistribution, insert_pilots

__all__ = [
    "EqualizerConfig",
    "EqualizerReference",
    "TxFrame",
    "ChainResult",
    "StageError",
    "EqualizerDiverged",
    "rrc_taps",
    "tx_waveform",
    "matched_filter",
    "gram_schmidt",
    "cma_butterfly",
    "frequency_recovery",
    "pilot_cpe",
    "lms_4x4",
    "build_tx_frame",
    "simulate_block",
    "rx_chain",
]

SYMBOL_RATE = 64_000_000_000.0  # symbols/s, gross


class StageError(RuntimeError):
    """DSP failure carrying the name of the stage that raised it."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


class EqualizerDiverged(StageError):
    """Adaptive filter blew up; carries a snapshot of the taps at failure."""

    def __init__(self, stage: str, message: str, taps):
        super().__init__(stage, message)
        self.taps = taps


@dataclass(frozen=True)
class EqualizerConfig:
    """Knobs of the adaptive stages. Tap counts must be odd (centered
    filters); steps are the data-aided warm-up rates, with separate smaller
    tracking rates once adaptation switches to pilots."""

    cma_taps: int = 25
    cma_step: float = 1e-3
    cma_track_step: float = 1e-4
    lms_taps: int = 51
    lms_step: float = 5e-4
    lms_track_step: float = 5e-5
    training_symbols: int = 4000
    pll_gain: float = 0.1
    cpe_avg_window: int = 8
    sps: int = 2
    rrc_beta: float = 0.35
    rrc_span_symbols: int = 16
    guard_symbols: int = 32
    divergence_factor: float = 10.0
    enable_gram_schmidt: bool = True
    enable_freq_recovery: bool = True
    enable_cpe: bool = True
    enable_lms: bool = True

    def __post_init__(self):
        if self.cma_taps % 2 == 0 or self.lms_taps % 2 == 0:
            raise ValueError("tap counts must be odd")
        for name in ("cma_step", "cma_track_step", "lms_step", "lms_track_step",
                     "pll_gain"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.training_symbols < 0 or self.guard_symbols < 0:
            raise ValueError("symbol counts must be >= 0")
        if self.sps < 2:
            raise ValueError("need at least 2 samples per symbol")
        if self.cpe_avg_window < 1:
            raise ValueError("averaging window must be >= 1")


@dataclass(frozen=True)
class EqualizerReference:
    """What the adaptive stages are allowed to know: the symbol stream
    (training prefix + pilots are the honest subset), the pilot positions,
    and the transmit alphabet's target radii."""

    symbols: np.ndarray  # (2, n_sym) complex
    pilot_mask: np.ndarray  # (n_sym,) bool
    radii: np.ndarray  # ascending moduli of the transmit alphabet


@dataclass(frozen=True)
class TxFrame:
    """Transmitted dual-pol frame plus the bookkeeping the receiver and the
    scorer need. point_idx is -1 at pilot positions."""

    symbols: np.ndarray  # (2, n_sym) unit average power
    pilot_mask: np.ndarray  # (n_sym,) bool
    point_idx: np.ndarray  # (2, n_sym) int, constellation index or -1
    dist: ShapedDistribution

    @property
    def n_symbols(self) -> int:
        return self.symbols.shape[1]

    def reference(self) -> EqualizerReference:
        return EqualizerReference(symbols=self.symbols, pilot_mask=self.pilot_mask,
                                  radii=self.dist.radii())


@dataclass(frozen=True)
class ChainResult:
    """Equalized symbols and the measurements taken from them."""

    symbols: np.ndarray  # (2, n_sym)
    report: MetricReport
    freq_offset_hz: float
    freq_ambiguous: bool
    noise_var_est: float


def rrc_taps(beta: float, sps: int, span_symbols: int) -> np.ndarray:
    """Root-raised-cosine impulse response, unit energy, odd length."""
    if not 0 < beta < 1:
        raise ValueError("roll-off must lie in (0, 1)")
    n = span_symbols * sps
    t = (np.arange(n + 1) - n / 2) / sps  # in symbol periods
    taps = np.empty(t.size)
    for i, ti in enumerate(t):
        if abs(ti) < 1e-12:
            taps[i] = 1.0 - beta + 4.0 * beta / math.pi
        elif abs(abs(ti) - 1.0 / (4.0 * beta)) < 1e-12:
            taps[i] = (beta / math.sqrt(2.0)) * (
                (1 + 2 / math.pi) * math.sin(math.pi / (4 * beta))
                + (1 - 2 / math.pi) * math.cos(math.pi / (4 * beta))
            )
        else:
            num = (math.sin(math.pi * ti * (1 - beta))
                   + 4 * beta * ti * math.cos(math.pi * ti * (1 + beta)))
            den = math.pi * ti * (1 - (4 * beta * ti) ** 2)
            taps[i] = num / den
    return taps / math.sqrt(np.sum(taps ** 2))


def tx_waveform(symbols: np.ndarray, cfg: EqualizerConfig) -> np.ndarray:
    """Upsample dual-pol symbols by cfg.sps and pulse-shape with the RRC.

    Centered convolution keeps symbol k at sample k*sps; with unit-energy
    taps the matched-filter output returns the symbols at unit gain.
    """
    symbols = np.asarray(symbols, dtype=complex)
    if symbols.ndim != 2 or symbols.shape[0] != 2:
        raise ValueError("expected symbols of shape (2, N)")
    taps = rrc_taps(cfg.rrc_beta, cfg.sps, cfg.rrc_span_symbols)
    up = np.zeros((2, symbols.shape[1] * cfg.sps), dtype=complex)
    up[:, ::cfg.sps] = symbols
    return np.stack([np.convolve(up[p], taps, mode="same") for p in range(2)])


def matched_filter(samples: np.ndarray, cfg: EqualizerConfig) -> np.ndarray:
    """Receive-side RRC filtering (the RRC is its own matched filter)."""
    samples = np.asarray(samples, dtype=complex)
    taps = rrc_taps(cfg.rrc_beta, cfg.sps, cfg.rrc_span_symbols)
    return np.stack([np.convolve(samples[p], taps, mode="same")
                     for p in range(samples.shape[0])])


def gram_schmidt(i_rail: np.ndarray, q_rail: np.ndarray):
    """Orthogonalize the quadrature rail against the in-phase rail.

    Q' = Q - (<I,Q>/<I,I>) I, then both rails are rescaled to carry half of
    the original combined power, so the stage is transparent to total power.
    """
    i_rail = np.asarray(i_rail, dtype=float)
    q_rail = np.asarray(q_rail, dtype=float)
    if i_rail.shape != q_rail.shape or i_rail.ndim != 1:
        raise ValueError("rails must be equal-length 1-D arrays")
    p_i = float(np.dot(i_rail, i_rail))
    if p_i == 0.0:
        raise ValueError("zero-power in-phase rail")
    q_orth = q_rail - (np.dot(i_rail, q_rail) / p_i) * i_rail
    p_q = float(np.dot(q_orth, q_orth))
    if p_q <= 1e-24 * p_i:
        raise ValueError("degenerate rails: quadrature fully correlated with in-phase")
    target = 0.5 * (p_i + float(np.dot(q_rail, q_rail)))
    return (i_rail * math.sqrt(target / p_i), q_orth * math.sqrt(target / p_q))


def _wrap_phase(x: float) -> float:
    return (x + math.pi) % (2.0 * math.pi) - math.pi


def cma_butterfly(x_pol: np.ndarray, y_pol: np.ndarray, cfg: EqualizerConfig,
                  mode: str, reference: EqualizerReference):
    """2x2 butterfly equalizer at cfg.sps samples/symbol, one output symbol
    per sps input samples.

    The first cfg.training_symbols outputs adapt data-aided (LMS against the
    known symbols, with a per-pol phase tracker so a carrier offset does not
    masquerade as an error). Afterwards, 'pilot-based' mode applies
    radius-directed updates at pilot positions only (phase-blind; the pilot
    modulus is the target radius), while 'data-aided' keeps using the full
    reference. Raises EqualizerDiverged when output power exceeds
    cfg.divergence_factor times the input sample power.
    """
    if mode not in ("data-aided", "pilot-based"):
        raise ValueError(f"unknown mode {mode!r}")
    x_pol = np.ascontiguousarray(x_pol, dtype=complex)
    y_pol = np.ascontiguousarray(y_pol, dtype=complex)
    if x_pol.shape != y_pol.shape or x_pol.ndim != 1:
        raise ValueError("polarizations must be equal-length 1-D arrays")
    sps, taps = cfg.sps, cfg.cma_taps
    n_sym = x_pol.size // sps
    if n_sym < 1:
        raise ValueError("input shorter than one symbol")
    if reference.symbols.shape[1] < n_sym:
        raise ValueError("reference shorter than the symbol stream")

    c = (taps - 1) // 2
    xp = np.concatenate([np.zeros(c, complex), x_pol, np.zeros(c, complex)])
    yp = np.concatenate([np.zeros(c, complex), y_pol, np.zeros(c, complex)])

    w = {key: np.zeros(taps, dtype=complex) for key in ("xx", "xy", "yx", "yy")}
    w["xx"][c] = 1.0
    w["yy"][c] = 1.0

    in_power = float(np.mean(np.abs(x_pol) ** 2 + np.abs(y_pol) ** 2)) / 2.0
    limit = cfg.divergence_factor * in_power * sps  # per recovered symbol
    ref = reference.symbols
    pilot = reference.pilot_mask
    theta = [0.0, 0.0]
    out = np.empty((2, n_sym), dtype=complex)

    for k in range(n_sym):
        base = sps * k
        ux = xp[base:base + taps]
        uy = yp[base:base + taps]
        zx = np.dot(w["xx"], ux) + np.dot(w["xy"], uy)
        zy = np.dot(w["yx"], ux) + np.dot(w["yy"], uy)
        out[0, k], out[1, k] = zx, zy

        if k < cfg.training_symbols:
            mu = cfg.cma_step
            for pol, z in ((0, zx), (1, zy)):
                d = ref[pol, k]
                if d == 0:
                    continue
                theta[pol] += cfg.pll_gain * _wrap_phase(
                    float(np.angle(z * np.conj(d))) - theta[pol])
                e = d * complex(math.cos(theta[pol]), math.sin(theta[pol])) - z
                if pol == 0:
                    w["xx"] += mu * e * np.conj(ux)
                    w["xy"] += mu * e * np.conj(uy)
                else:
                    w["yx"] += mu * e * np.conj(ux)
                    w["yy"] += mu * e * np.conj(uy)
        elif mode == "data-aided":
            mu = cfg.cma_step
            for pol, z in ((0, zx), (1, zy)):
                d = ref[pol, k]
                if d == 0:
                    continue
                theta[pol] += cfg.pll_gain * _wrap_phase(
                    float(np.angle(z * np.conj(d))) - theta[pol])
                e = d * complex(math.cos(theta[pol]), math.sin(theta[pol])) - z
                if pol == 0:
                    w["xx"] += mu * e * np.conj(ux)
                    w["xy"] += mu * e * np.conj(uy)
                else:
                    w["yx"] += mu * e * np.conj(ux)
                    w["yy"] += mu * e * np.conj(uy)
        elif pilot[k]:
            mu = cfg.cma_track_step
            for pol, z in ((0, zx), (1, zy)):
                r2 = abs(ref[pol, k]) ** 2  # known pilot modulus
                e = (r2 - abs(z) ** 2) * z
                if pol == 0:
                    w["xx"] += mu * e * np.conj(ux)
                    w["xy"] += mu * e * np.conj(uy)
                else:
                    w["yx"] += mu * e * np.conj(ux)
                    w["yy"] += mu * e * np.conj(uy)

        if k % 256 == 255:
            recent = out[:, max(0, k - 255):k + 1]
            power = float(np.mean(np.abs(recent) ** 2))
            if not math.isfinite(power) or power > limit:
                raise EqualizerDiverged(
                    "cma", f"output power {power:.3g} exceeds {limit:.3g}",
                    {key: val.copy() for key, val in w.items()})

    return out, w


def _modal_spacing(positions: np.ndarray) -> int:
    diffs = np.diff(positions)
    vals, counts = np.unique(diffs, return_counts=True)
    return int(vals[np.argmax(counts)])


def frequency_recovery(symbols: np.ndarray, pilot_mask: np.ndarray,
                       pilot_ref: np.ndarray, symbol_rate: float = SYMBOL_RATE):
    """Estimate and remove a common carrier frequency offset from the mean
    phase increment between consecutive pilots.

    Returns (corrected symbols, offset_hz, ambiguous). The estimator is
    unambiguous for |offset| < symbol_rate / (2 * pilot spacing); estimates
    whose mean increment approaches +-pi raise the ambiguity flag.
    """
    z = np.atleast_2d(np.asarray(symbols, dtype=complex))
    pilot_mask = np.asarray(pilot_mask, dtype=bool)
    ref = np.atleast_2d(np.asarray(pilot_ref, dtype=complex))
    pos = np.flatnonzero(pilot_mask)
    if pos.size < 2:
        raise ValueError("need at least two pilots")
    if z.shape[1] != pilot_mask.size or ref.shape[1] != pos.size:
        raise ValueError("pilot bookkeeping does not match the symbol stream")

    spacing = _modal_spacing(pos)
    acc = 0.0 + 0.0j
    for pol in range(z.shape[0]):
        r = z[pol, pos] * np.conj(ref[pol])
        keep = np.diff(pos) == spacing
        acc += np.sum(r[1:][keep] * np.conj(r[:-1][keep]))
    dphi = float(np.angle(acc))
    ambiguous = abs(dphi) > 0.9 * math.pi
    offset_hz = dphi * symbol_rate / (2.0 * math.pi * spacing)
    t = np.arange(z.shape[1]) / symbol_rate
    corrected = z * np.exp(-2j * math.pi * offset_hz * t)[None, :]
    if symbols.ndim == 1:
        corrected = corrected[0]
    return corrected, offset_hz, ambiguous


def _matched_average(values: np.ndarray, window: int) -> np.ndarray:
    kernel = np.ones(window)
    norm = np.convolve(np.ones(values.size), kernel, mode="same")
    return np.convolve(values, kernel, mode="same") / norm


def _interp_with_tails(x: np.ndarray, xp: np.ndarray, fp: np.ndarray) -> np.ndarray:
    y = np.interp(x, xp, fp)
    if xp.size >= 2:
        left = (fp[1] - fp[0]) / (xp[1] - xp[0])
        right = (fp[-1] - fp[-2]) / (xp[-1] - xp[-2])
        y = np.where(x < xp[0], fp[0] + (x - xp[0]) * left, y)
        y = np.where(x > xp[-1], fp[-1] + (x - xp[-1]) * right, y)
    return y


def cpe_phase(symbols: np.ndarray, pilot_mask: np.ndarray, pilot_ref: np.ndarray,
              avg_window: int = 8) -> np.ndarray:
    """Carrier phase trajectory estimate for one polarization, in radians
    per symbol position.

    Per-pilot phases arg(rx conj(ref)) are unwrapped, smoothed over
    avg_window pilots, and linearly interpolated to every symbol (linear
    extrapolation at the ends). Pilot positions are averaged with the same
    kernel as the phases, so affine phase trajectories survive the smoothing
    exactly regardless of the window.
    """
    z = np.asarray(symbols, dtype=complex)
    pilot_mask = np.asarray(pilot_mask, dtype=bool)
    ref = np.asarray(pilot_ref, dtype=complex)
    pos = np.flatnonzero(pilot_mask)
    if pos.size < 2:
        raise ValueError("need at least two pilots")
    if z.ndim != 1 or z.size != pilot_mask.size or ref.size != pos.size:
        raise ValueError("pilot bookkeeping does not match the symbol stream")

    psi = np.unwrap(np.angle(z[pos] * np.conj(ref)))
    window = min(avg_window, pos.size)
    sm_phase = _matched_average(psi, window)
    sm_pos = _matched_average(pos.astype(float), window)
    return _interp_with_tails(np.arange(z.size, dtype=float), sm_pos, sm_phase)


def pilot_cpe(symbols: np.ndarray, pilot_mask: np.ndarray, pilot_ref: np.ndarray,
              avg_window: int = 8) -> np.ndarray:
    """Pilot-aided carrier phase correction for one polarization (see
    cpe_phase for the estimator)."""
    phase = cpe_phase(symbols, pilot_mask, pilot_ref, avg_window)
    return np.asarray(symbols, dtype=complex) * np.exp(-1j * phase)


def lms_4x4(symbols: np.ndarray, cfg: EqualizerConfig,
            reference: EqualizerReference,
            carrier_phase: np.ndarray | None = None):
    """4x4 real-valued LMS over the rails (XI, XQ, YI, YQ) at 1 sample per
    symbol: 16 real FIR filters of cfg.lms_taps, able to undo IQ skew and
    imbalance that the complex butterfly cannot represent.

    Frontend skew and imbalance are static only before carrier derotation;
    after it, their conjugate-image terms spin at twice the carrier. When
    `carrier_phase` (per pol, the phase already removed upstream) is given,
    the filter therefore adapts in the re-rotated frontend domain and its
    output is derotated again, so the map it learns stays static. Without
    it the input domain is used as-is.

    Data-aided over the training prefix, then pilot-driven updates at the
    smaller tracking step. Divergence handling mirrors cma_butterfly.
    """
    z = np.asarray(symbols, dtype=complex)
    if z.ndim != 2 or z.shape[0] != 2:
        raise ValueError("expected dual-pol symbols of shape (2, N)")
    n = z.shape[1]
    if reference.symbols.shape[1] < n:
        raise ValueError("reference shorter than the symbol stream")
    taps = cfg.lms_taps
    c = (taps - 1) // 2

    if carrier_phase is None:
        rot = np.ones((2, n), dtype=complex)
    else:
        carrier_phase = np.asarray(carrier_phase, dtype=float)
        if carrier_phase.shape != z.shape:
            raise ValueError("carrier phase must match the symbol stream")
        rot = np.exp(1j * carrier_phase)
    z_front = z * rot

    rails = np.concatenate([
        np.zeros((4, c)),
        np.stack([z_front[0].real, z_front[0].imag,
                  z_front[1].real, z_front[1].imag]),
        np.zeros((4, c)),
    ], axis=1)
    ref_front = reference.symbols[:, :n] * rot
    pilot = reference.pilot_mask
    dim = 4 * taps

    weights = np.zeros((4, dim))
    for r in range(4):
        weights[r, r * taps + c] = 1.0

    in_power = float(np.mean(np.abs(z) ** 2))
    limit = cfg.divergence_factor * in_power
    out = np.empty((2, n), dtype=complex)

    for k in range(n):
        u = rails[:, k:k + taps].ravel()
        o = weights @ u
        out[0, k] = complex(o[0], o[1]) * np.conj(rot[0, k])
        out[1, k] = complex(o[2], o[3]) * np.conj(rot[1, k])

        train = k < cfg.training_symbols
        if train or pilot[k]:
            mu = cfg.lms_step if train else cfg.lms_track_step
            d = np.array([ref_front[0, k].real, ref_front[0, k].imag,
                          ref_front[1, k].real, ref_front[1, k].imag])
            weights += mu * np.outer(d - o, u)

        if k % 256 == 255:
            recent = out[:, max(0, k - 255):k + 1]
            power = float(np.mean(np.abs(recent) ** 2))
            if not math.isfinite(power) or power > limit:
                raise EqualizerDiverged(
                    "lms", f"output power {power:.3g} exceeds {limit:.3g}",
                    weights.reshape(4, 4, taps).copy())

    return out, weights.reshape(4, 4, taps)


def build_tx_frame(dist: ShapedDistribution, n_symbols: int, seed) -> TxFrame:
    """Assemble a dual-pol pilot-framed stream of exactly n_symbols symbols
    per polarization (n_symbols must fill whole pilot frames)."""
    num, den = 15, 16
    if n_symbols % den:
        raise ValueError(f"symbol count must be a multiple of {den}")
    n_payload = n_symbols * num // den
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    data_seed, pilot_x, pilot_y = ss.spawn(3)
    rng = np.random.default_rng(data_seed)

    idx = rng.choice(dist.template.M, size=(2, n_payload), p=dist.p)
    alphabet = dist.tx_points()
    symbols = np.empty((2, n_symbols), dtype=complex)
    point_idx = np.full((2, n_symbols), -1, dtype=np.int64)
    mask = None
    for pol, pseed in ((0, pilot_x), (1, pilot_y)):
        frame = insert_pilots(alphabet[idx[pol]], (num, den), 1.0,
                              seed=int(pseed.generate_state(1)[0]))
        if frame.symbols.size != n_symbols:
            raise AssertionError("framing arithmetic is off")
        symbols[pol] = frame.symbols
        point_idx[pol, ~frame.pilot_mask] = idx[pol]
        mask = frame.pilot_mask
    return TxFrame(symbols=symbols, pilot_mask=mask, point_idx=point_idx, dist=dist)


def simulate_block(dist: ShapedDistribution, snr_db: float,
                   impairments: ImpairmentConfig | None, cfg: EqualizerConfig,
                   n_samples: int = 200_000, seed=0,
                   symbol_rate: float = SYMBOL_RATE):
    """Transmit one waveform block: shaped symbols -> pilot framing -> RRC
    waveform -> impairments -> AWGN. Returns (frame, received samples)."""
    if n_samples % cfg.sps:
        raise ValueError("sample count must be a multiple of sps")
    n_symbols = n_samples // cfg.sps
    ss = np.random.SeedSequence(seed)
    frame_seed, noise_seed = ss.spawn(2)
    frame = build_tx_frame(dist, n_symbols, frame_seed)
    wf = tx_waveform(frame.symbols, cfg)
    if impairments is not None:
        wf = apply_impairments(wf, impairments, sample_rate=symbol_rate * cfg.sps)
    rx = awgn_transmit(wf, snr_db, np.random.default_rng(noise_seed))
    return frame, rx


def rx_chain(waveform: np.ndarray, frame: TxFrame, cfg: EqualizerConfig,
             symbol_rate: float = SYMBOL_RATE) -> ChainResult:
    """Run the full receive chain and score the payload.

    Stages: matched filter -> Gram-Schmidt -> CMA butterfly (pilot-based) ->
    frequency recovery -> pilot CPE -> 4x4 LMS -> metrics. Metrics cover
    payload symbols only: pilots, the training prefix, and a short guard
    tail are excluded. The demapper noise variance is estimated from pilot
    error vectors, as a receiver without payload knowledge would.
    """
    wf = np.asarray(waveform, dtype=complex)
    if wf.ndim != 2 or wf.shape[0] != 2:
        raise ValueError("expected dual-pol waveform of shape (2, N)")
    reference = frame.reference()

    def guard(stage: str, fn, *args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except StageError:
            raise
        except Exception as e:
            raise StageError(stage, str(e)) from e

    wf = guard("matched_filter", matched_filter, wf, cfg)

    if cfg.enable_gram_schmidt:
        rails = []
        for pol in range(2):
            i_rail, q_rail = guard("gram_schmidt", gram_schmidt,
                                   wf[pol].real, wf[pol].imag)
            rails.append(i_rail + 1j * q_rail)
        wf = np.stack(rails)

    z, _ = guard("cma", cma_butterfly, wf[0], wf[1], cfg, "pilot-based", reference)

    pilot_ref = np.stack([frame.symbols[p, frame.pilot_mask] for p in range(2)])
    n_sym_stream = z.shape[1]
    removed_phase = np.zeros((2, n_sym_stream))
    freq_offset_hz, ambiguous = 0.0, False
    if cfg.enable_freq_recovery:
        z, freq_offset_hz, ambiguous = guard(
            "frequency_recovery", frequency_recovery, z, frame.pilot_mask,
            pilot_ref, symbol_rate)
        removed_phase += (2.0 * math.pi * freq_offset_hz
                          * np.arange(n_sym_stream) / symbol_rate)[None, :]

    if cfg.enable_cpe:
        phases = np.stack([
            guard("pilot_cpe", cpe_phase, z[pol], frame.pilot_mask,
                  pilot_ref[pol], cfg.cpe_avg_window)
            for pol in range(2)
        ])
        z = z * np.exp(-1j * phases)
        removed_phase += phases

    if cfg.enable_lms:
        z, _ = guard("lms", lms_4x4, z, cfg, reference, removed_phase)

    n_sym = frame.n_symbols
    scored = np.zeros(n_sym, dtype=bool)
    scored[cfg.training_symbols:max(cfg.training_symbols, n_sym - cfg.guard_symbols)] = True
    payload = scored & ~frame.pilot_mask
    if not payload.any():
        raise StageError("metrics", "no payload symbols left to score")

    settled = scored & frame.pilot_mask
    err = z[:, settled] - frame.symbols[:, settled]
    noise_var_est = max(float(np.mean(np.abs(err) ** 2)), 1e-12)

    rx_pay = z[:, payload]
    tx_pay = frame.symbols[:, payload]
    ev = evm_percent(rx_pay.ravel(), tx_pay.ravel())
    gmi = sum(
        gmi_from_samples(frame.point_idx[pol, payload], rx_pay[pol],
                         frame.dist, noise_var_est)
        for pol in range(2)
    ) / 2.0
    h = frame.dist.entropy_bits
    report = MetricReport(
        n_symbols=int(2 * payload.sum()),
        entropy_bits=h,
        gmi_bits=gmi,
        ngmi=ngmi(gmi, h, frame.dist.template.bits_per_symbol),
        evm_percent=ev,
        snr_db=snr_from_evm(ev),
    )
    return ChainResult(symbols=z, report=report, freq_offset_hz=freq_offset_hz,
                       freq_ambiguous=ambiguous, noise_var_est=noise_var_est)
