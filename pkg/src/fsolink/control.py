"""Rate-adaptive link control: the moving-average SNR predictor, the
AIR-table rate selection, the three-scheme campaign runner with outage
accounting, and the report files the CLI emits.

A campaign replays a stored SNR trace. Per iteration and scheme it realizes
the channel (Monte-Carlo symbols in analytic mode, the full waveform chain
in waveform mode), measures SNR and NGMI, and applies the service rule:
an iteration delivers data only while NGMI stays at or above the table's
threshold; everything else is discarded as outage.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from .airlut import AirTable, RatePlan, air_for_rate, lookup_air, net_bit_rate
from .channel import ImpairmentConfig, SnrTrace
from .metrics import awgn_link_metrics
from .shaping import (
    ENTROPY_FLOOR_BITS,
    ConstellationTemplate,
    ShapedDistribution,
    mb_distribution,
    solve_nu_for_entropy,
)

__all__ = [
    "SCHEMES",
    "PredictorState",
    "IterationRecord",
    "CampaignReport",
    "predict_snr",
    "select_rate",
    "run_campaign",
    "accumulate_report",
    "emit_report",
    "load_records",
    "sweep_predictor",
]

SCHEMES = ("fixed400", "fixed500", "adaptive")
FIXED_RATES_BPS = {"fixed400": 400e9, "fixed500": 500e9}

RECORD_COLUMNS = ("n", "t_s", "scheme", "weather", "snr_true_db", "snr_meas_db",
                  "snr_est_db", "entropy_bits", "air", "rate_bps", "ngmi",
                  "in_service")


@dataclass
class PredictorState:
    """Ring of the last N measured SNRs feeding the moving-average
    predictor. Prediction is only defined once the window is full; the
    campaign's warm-up rule covers the first N iterations."""

    n_window: int = 3
    snr_margin_db: float = 2.0
    window: list = field(default_factory=list)

    def __post_init__(self):
        if self.n_window < 1:
            raise ValueError("window length must be >= 1")
        if not math.isfinite(self.snr_margin_db):
            raise ValueError("margin must be finite")
        if len(self.window) > self.n_window:
            raise ValueError("window holds more than N values")

    @property
    def full(self) -> bool:
        return len(self.window) == self.n_window

    def push(self, snr_meas_db: float) -> None:
        self.window.append(float(snr_meas_db))
        del self.window[:-self.n_window]


def predict_snr(state: PredictorState) -> float:
    """Moving average of the last N measured SNRs minus the margin (dB)."""
    if not state.full:
        raise ValueError(
            f"predictor window holds {len(state.window)}/{state.n_window} values")
    return float(np.mean(state.window)) - state.snr_margin_db


def select_rate(table: AirTable, snr_est_db: float,
                plan: RatePlan = RatePlan()):
    """Map a predicted SNR to (entropy bits/pol, AIR, net bit-rate).

    AIR below twice the shaping entropy floor cannot be realized by any
    valid distribution (interpolation across the table's service cliff can
    produce such values), so it collapses to 0: out of service, transmit
    nothing this iteration.
    """
    air = float(lookup_air(table, snr_est_db))
    if air < 2.0 * ENTROPY_FLOOR_BITS:
        return 0.0, 0.0, 0.0
    return air / 2.0, air, net_bit_rate(air, plan)


@dataclass(frozen=True)
class IterationRecord:
    """One scheme's outcome at one trace sample.

    Out-of-service iterations (air = 0) carry ngmi = 0.0 by convention:
    no payload exists to score, and the convention keeps the invariant
    in_service == (ngmi >= threshold) exact. snr_est_db is NaN while the
    predictor window is still filling and for the fixed schemes.
    """

    n: int
    t_s: float
    scheme: str
    weather: str
    snr_true_db: float
    snr_meas_db: float
    snr_est_db: float
    entropy_bits: float
    air: float
    rate_bps: float
    ngmi: float
    in_service: bool


@dataclass(frozen=True)
class CampaignReport:
    """Per-scheme service statistics plus accumulated-capacity gain curves
    of the adaptive scheme over each fixed one."""

    schemes: tuple
    n_iterations: int
    sampling_period_s: float
    mean_effective_rate_bps: dict
    outage_fraction: dict
    delivered_bytes: dict
    gain_vs_fixed_bytes: dict  # fixed scheme -> cumulative gain time series

    def to_dict(self) -> dict:
        return {
            "schemes": list(self.schemes),
            "n_iterations": self.n_iterations,
            "sampling_period_s": self.sampling_period_s,
            "mean_effective_rate_bps": dict(self.mean_effective_rate_bps),
            "outage_fraction": dict(self.outage_fraction),
            "delivered_bytes": dict(self.delivered_bytes),
            "gain_vs_fixed_bytes": {k: [float(x) for x in v]
                                    for k, v in self.gain_vs_fixed_bytes.items()},
        }


@lru_cache(maxsize=None)
def _dist_for_entropy(h_hundredths: int, M: int) -> ShapedDistribution:
    tpl = ConstellationTemplate.square_qam(M)
    h = h_hundredths / 100.0
    return mb_distribution(solve_nu_for_entropy(h, tpl), tpl)


_PROBE_DIST = ShapedDistribution(
    template=ConstellationTemplate.square_qam(4),
    p=np.full(4, 0.25), nu=0.0)


def _measure_analytic(dist: ShapedDistribution, snr_db: float, rng,
                      n_symbols: int):
    rep = awgn_link_metrics(dist, snr_db, n_symbols, rng)
    return rep.snr_db, rep.ngmi


def _measure_waveform(dist: ShapedDistribution, snr_db: float, seed_seq,
                      impairments: ImpairmentConfig | None, n_samples: int):
    from .dsprx import EqualizerConfig, rx_chain, simulate_block

    cfg = EqualizerConfig()
    frame, rx = simulate_block(dist, snr_db, impairments, cfg,
                               n_samples=n_samples, seed=seed_seq)
    res = rx_chain(rx, frame, cfg)
    return res.report.snr_db, res.report.ngmi


def run_campaign(trace: SnrTrace, schemes, table: AirTable,
                 plan: RatePlan = RatePlan(), mode: str = "analytic",
                 seed: int = 0, n_window: int = 3, snr_margin_db: float = 2.0,
                 mc_symbols: int = 200_000,
                 impairments: ImpairmentConfig | None = None,
                 waveform_samples: int = 200_000) -> list:
    """Replay the trace for each scheme and return one IterationRecord per
    (iteration, scheme), iteration-major.

    Fixed schemes transmit at the exact entropy their target rate implies.
    The adaptive scheme predicts from its own measurement stream and uses
    select_rate; during the first n_window iterations it transmits at the
    fixed-400G entropy while the window fills. Out-of-service iterations
    still measure SNR (uniform-QPSK probe) so the predictor keeps running.
    Seeds derive from (seed, iteration, scheme index): the record list is
    bit-identical across runs and schemes never share noise.
    """
    if mode not in ("analytic", "waveform"):
        raise ValueError(f"unknown mode {mode!r}")
    schemes = tuple(schemes)
    if not schemes:
        raise ValueError("no schemes requested")
    for s in schemes:
        if s not in SCHEMES:
            raise ValueError(f"unknown scheme {s!r}; choose from {SCHEMES}")
    tpl = ConstellationTemplate.square_qam(64)
    if table.M != tpl.M:
        raise ValueError(
            f"AIR table was built for M={table.M}, campaign runs M={tpl.M}")

    fixed_entropy = {
        name: air_for_rate(rate, plan) / 2.0
        for name, rate in FIXED_RATES_BPS.items()
    }
    warmup_entropy = fixed_entropy["fixed400"]
    predictor = PredictorState(n_window=n_window, snr_margin_db=snr_margin_db)

    records = []
    for n in range(len(trace)):
        snr_true = float(trace.snr_db[n])
        for idx, scheme in enumerate(schemes):
            rng = np.random.default_rng(np.random.SeedSequence([seed, n, idx]))
            snr_est = math.nan
            if scheme == "adaptive":
                if predictor.full:
                    snr_est = predict_snr(predictor)
                    entropy, air, rate = select_rate(table, snr_est, plan)
                else:
                    entropy = warmup_entropy
                    air = 2.0 * entropy
                    rate = net_bit_rate(air, plan)
            else:
                entropy = fixed_entropy[scheme]
                air = 2.0 * entropy
                rate = net_bit_rate(air, plan)

            if air == 0.0:
                # Nothing to transmit; probe the channel so the measured-SNR
                # stream (and with it the predictor) never starves.
                snr_meas, _ = _measure_analytic(_PROBE_DIST, snr_true, rng,
                                                mc_symbols)
                ngmi_val = 0.0
            elif mode == "analytic":
                dist = _dist_for_entropy(round(entropy * 100), tpl.M)
                snr_meas, ngmi_val = _measure_analytic(dist, snr_true, rng,
                                                       mc_symbols)
            else:
                dist = _dist_for_entropy(round(entropy * 100), tpl.M)
                snr_meas, ngmi_val = _measure_waveform(
                    dist, snr_true, np.random.SeedSequence([seed, n, idx]),
                    impairments, waveform_samples)

            if scheme == "adaptive":
                predictor.push(snr_meas)

            records.append(IterationRecord(
                n=n, t_s=float(trace.t_s[n]), scheme=scheme,
                weather=trace.weather[n], snr_true_db=snr_true,
                snr_meas_db=float(snr_meas), snr_est_db=float(snr_est),
                entropy_bits=float(entropy), air=float(air),
                rate_bps=float(rate), ngmi=float(ngmi_val),
                in_service=bool(ngmi_val >= table.ngmi_th),
            ))
    return records


def _by_scheme(records) -> dict:
    out: dict = {}
    for r in records:
        out.setdefault(r.scheme, []).append(r)
    return out


def accumulate_report(records, sampling_period_s: float) -> CampaignReport:
    """Reduce a campaign's records to service statistics.

    Effective rate zero-rates outage iterations (discarded data); delivered
    capacity integrates in-service bits over the sampling period.
    """
    if not records:
        raise ValueError("no records to accumulate")
    groups = _by_scheme(records)
    schemes = tuple(groups)
    n_iter = max(len(v) for v in groups.values())

    mean_rate, outage, delivered, cumulative = {}, {}, {}, {}
    for scheme, rows in groups.items():
        eff = np.array([r.rate_bps if r.in_service else 0.0 for r in rows])
        mean_rate[scheme] = float(eff.mean())
        outage[scheme] = float(np.mean([not r.in_service for r in rows]))
        per_iter_bytes = eff * sampling_period_s / 8.0
        cumulative[scheme] = np.cumsum(per_iter_bytes)
        delivered[scheme] = float(cumulative[scheme][-1])

    gains = {}
    if "adaptive" in groups:
        for scheme in schemes:
            if scheme in FIXED_RATES_BPS and len(groups[scheme]) == len(groups["adaptive"]):
                gains[scheme] = cumulative["adaptive"] - cumulative[scheme]

    return CampaignReport(
        schemes=schemes, n_iterations=n_iter,
        sampling_period_s=float(sampling_period_s),
        mean_effective_rate_bps=mean_rate, outage_fraction=outage,
        delivered_bytes=delivered, gain_vs_fixed_bytes=gains,
    )


def _format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def emit_report(report: CampaignReport, records, out_dir) -> None:
    """Write records.csv, summary.json, and the per-panel CSV files into
    out_dir (created if missing)."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise OSError(f"cannot create report directory {out}: {e}") from e

    def write(path: Path, text: str) -> None:
        try:
            path.write_text(text, encoding="utf-8", newline="")
        except OSError as e:
            raise OSError(f"cannot write {path}: {e}") from e

    lines = [",".join(RECORD_COLUMNS)]
    for r in records:
        lines.append(",".join(_format_value(getattr(r, c)) for c in RECORD_COLUMNS))
    write(out / "records.csv", "\n".join(lines) + "\n")

    write(out / "summary.json", json.dumps(report.to_dict(), indent=2) + "\n")

    groups = _by_scheme(records)
    schemes = tuple(groups)
    base = next(iter(groups.values()))
    t = [r.t_s for r in base]

    def panel(name: str, columns: dict) -> None:
        head = ["t_s"] + list(columns)
        rows = [",".join(head)]
        for i, ti in enumerate(t):
            rows.append(",".join([repr(ti)] + [
                _format_value(columns[c][i]) for c in columns]))
        write(out / name, "\n".join(rows) + "\n")

    snr_cols = {"snr_true_db": [r.snr_true_db for r in base]}
    for s in schemes:
        snr_cols[f"snr_meas_db_{s}"] = [r.snr_meas_db for r in groups[s]]
    panel("snr_vs_t.csv", snr_cols)

    panel("ngmi_vs_t.csv",
          {f"ngmi_{s}": [r.ngmi for r in groups[s]] for s in schemes})
    panel("rate_vs_t.csv",
          {f"rate_bps_{s}": [r.rate_bps for r in groups[s]] for s in schemes})
    if report.gain_vs_fixed_bytes:
        panel("gain_vs_t.csv",
              {f"gain_bytes_vs_{s}": list(v)
               for s, v in report.gain_vs_fixed_bytes.items()})


def load_records(path) -> list:
    """Parse a records.csv written by emit_report back into records."""
    text = Path(path).read_text(encoding="utf-8")
    lines = [ln for ln in text.split("\n") if ln]
    if not lines or lines[0] != ",".join(RECORD_COLUMNS):
        raise ValueError(f"{path}: unexpected records.csv header")
    out = []
    for ln_no, ln in enumerate(lines[1:], start=2):
        parts = ln.split(",")
        if len(parts) != len(RECORD_COLUMNS):
            raise ValueError(f"{path}:{ln_no}: expected "
                             f"{len(RECORD_COLUMNS)} columns, got {len(parts)}")
        out.append(IterationRecord(
            n=int(parts[0]), t_s=float(parts[1]), scheme=parts[2],
            weather=parts[3], snr_true_db=float(parts[4]),
            snr_meas_db=float(parts[5]), snr_est_db=float(parts[6]),
            entropy_bits=float(parts[7]), air=float(parts[8]),
            rate_bps=float(parts[9]), ngmi=float(parts[10]),
            in_service={"true": True, "false": False}[parts[11]],
        ))
    return out


def sweep_predictor(trace: SnrTrace, table: AirTable, n_values, margins_db,
                    plan: RatePlan = RatePlan(), seed: int = 0,
                    mc_symbols: int = 200_000) -> dict:
    """Grid-sweep the predictor's window length and margin; returns
    {(N, margin): mean effective adaptive rate in bps}. Analytic mode only
    (the sweep exists to study the controller, not the waveform DSP)."""
    out = {}
    for n_window in n_values:
        for margin in margins_db:
            recs = run_campaign(trace, ("adaptive",), table, plan,
                                mode="analytic", seed=seed, n_window=n_window,
                                snr_margin_db=margin, mc_symbols=mc_symbols)
            rep = accumulate_report(recs, trace.sampling_period_s)
            out[(int(n_window), float(margin))] = \
                rep.mean_effective_rate_bps["adaptive"]
    return out
