"""GMI/NGMI/EVM metrics against independent numerical oracles.

The headline check compares the Monte-Carlo GMI estimator for uniform 64QAM
with a Gauss-Hermite quadrature oracle built from first principles on the
per-axis 8-PAM decomposition — a fully independent evaluation path.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fsolink.channel import awgn_transmit
from fsolink.metrics import (
    awgn_link_metrics,
    bitwise_llrs,
    evm_percent,
    gmi_from_samples,
    ngmi,
    snr_from_evm,
)
from fsolink.shaping import ConstellationTemplate, ShapedDistribution, mb_distribution

TPL = ConstellationTemplate.square_qam(64)
UNIFORM = mb_distribution(0.0, TPL)


def _gray(i):
    return i ^ (i >> 1)


def gmi_uniform_qam64_oracle(snr_db: float, n_nodes: int = 96) -> float:
    """Bit-metric decoding rate of uniform Gray 64QAM on AWGN by numerical
    integration: the 2D constellation factors into two Gray 8-PAM axes, and
    each per-bit expectation is a smooth 1D Gaussian integral evaluated with
    Gauss-Hermite quadrature."""
    t, w = np.polynomial.hermite.hermgauss(n_nodes)
    n0 = 10.0 ** (-snr_db / 10.0)  # complex noise variance
    s = math.sqrt(n0 / 2.0)  # per-axis noise std
    levels = (2.0 * np.arange(8) - 7.0) / math.sqrt(42.0)
    labels = np.array([_gray(i) for i in range(8)])

    gmi_axis = 0.0
    for j in range(3):
        bit = (labels >> (2 - j)) & 1
        loss = 0.0
        for xi in range(8):
            y = levels[xi] + math.sqrt(2.0) * s * t  # quadrature nodes
            d2 = (y[:, None] - levels[None, :]) ** 2
            e = np.exp(-(d2 - d2.min(axis=1, keepdims=True)) / (2.0 * s * s))
            num = e.sum(axis=1)
            den = e[:, bit == bit[xi]].sum(axis=1)
            loss += float(w @ np.log2(num / den)) / math.sqrt(math.pi) / 8.0
        gmi_axis += 1.0 - loss
    return 2.0 * gmi_axis


def _uniform_awgn_batch(snr_db, n, seed):
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, 64, n)
    tx = UNIFORM.tx_points()[idx]
    rx = awgn_transmit(tx, snr_db, rng)
    return idx, rx, 10.0 ** (-snr_db / 10.0)


# -------------------------------------------------------------------- LLRs

def test_llr_signs_match_labels_in_noiseless_limit():
    rx = UNIFORM.tx_points()
    llrs = bitwise_llrs(rx, UNIFORM, noise_var=1e-4)
    masks = TPL.bit_masks()  # (m, M), True where the bit is 1
    for j in range(6):
        want_negative = masks[j]
        assert np.all((llrs[:, j] < 0) == want_negative)


def test_llr_zero_at_equidistant_point_with_uniform_prior():
    qpsk = mb_distribution(0.0, ConstellationTemplate.square_qam(4))
    llrs = bitwise_llrs(np.array([0.0 + 0.0j]), qpsk, noise_var=0.5)
    np.testing.assert_array_equal(llrs, np.zeros((1, 2)))


def test_llr_matches_direct_evaluation_on_toy_template():
    tpl4 = ConstellationTemplate.square_qam(4)
    dist = ShapedDistribution(template=tpl4, p=np.array([0.4, 0.3, 0.2, 0.1]),
                              nu=0.0)
    rx = np.array([0.3 - 0.1j, -0.9 + 0.4j, 0.05 + 0.02j])
    noise_var = 0.2
    got = bitwise_llrs(rx, dist, noise_var)

    pts = dist.tx_points()
    for n, y in enumerate(rx):
        lik = dist.p * np.exp(-np.abs(y - pts) ** 2 / noise_var)
        for j in range(2):
            bit = (tpl4.labels >> (1 - j)) & 1
            ref = math.log(lik[bit == 0].sum()) - math.log(lik[bit == 1].sum())
            assert got[n, j] == pytest.approx(ref, abs=1e-9)


def test_llr_input_validation():
    with pytest.raises(ValueError):
        bitwise_llrs(np.array([]), UNIFORM, 0.1)
    with pytest.raises(ValueError):
        bitwise_llrs(np.array([0j]), UNIFORM, 0.0)


@given(st.floats(min_value=-20, max_value=60), st.integers(0, 2**32 - 1))
@settings(max_examples=30, deadline=None)
def test_llr_finite_over_wide_snr_range(snr_db, seed):
    idx, rx, noise_var = _uniform_awgn_batch(snr_db, 64, seed)
    llrs = bitwise_llrs(rx, UNIFORM, noise_var)
    assert np.all(np.isfinite(llrs))


# --------------------------------------------------------------------- GMI

def test_gmi_noiseless_equals_entropy():
    idx = np.arange(64)
    rx = UNIFORM.tx_points()[idx]
    g = gmi_from_samples(idx, rx, UNIFORM, noise_var=1e-4)
    assert g == pytest.approx(UNIFORM.entropy_bits, abs=1e-6)


def test_gmi_matches_quadrature_oracle_at_20db():
    idx, rx, noise_var = _uniform_awgn_batch(20.0, 100_000, seed=42)
    g = gmi_from_samples(idx, rx, UNIFORM, noise_var)
    assert g == pytest.approx(gmi_uniform_qam64_oracle(20.0), abs=0.05)


def test_gmi_small_at_negative_snr():
    idx, rx, noise_var = _uniform_awgn_batch(-10.0, 50_000, seed=43)
    assert gmi_from_samples(idx, rx, UNIFORM, noise_var) < 0.5
    assert gmi_uniform_qam64_oracle(-10.0) < 0.5


def test_gmi_saturates_at_high_snr():
    idx, rx, noise_var = _uniform_awgn_batch(30.0, 100_000, seed=44)
    assert gmi_from_samples(idx, rx, UNIFORM, noise_var) >= 5.99


def test_gmi_monotone_in_snr():
    vals = []
    for snr in range(0, 31, 5):
        idx, rx, noise_var = _uniform_awgn_batch(float(snr), 20_000, seed=7)
        vals.append(gmi_from_samples(idx, rx, UNIFORM, noise_var))
    assert all(b >= a - 0.05 for a, b in zip(vals[:-1], vals[1:]))


def test_gmi_length_mismatch_rejected():
    with pytest.raises(ValueError):
        gmi_from_samples(np.array([0, 1]), np.array([0j]), UNIFORM, 0.1)


def test_gmi_never_exceeds_entropy():
    dist = mb_distribution(0.3, TPL)
    for snr in (0.0, 15.0, 35.0):
        rep = awgn_link_metrics(dist, snr, 20_000, seed=11)
        assert rep.gmi_bits <= dist.entropy_bits + 1e-6
        assert 0.0 <= rep.ngmi <= 1.0 + 1e-9


# -------------------------------------------------------------------- NGMI

def test_ngmi_examples():
    assert ngmi(6.0, 6.0, 6) == pytest.approx(1.0, abs=1e-12)
    assert ngmi(5.4, 6.0, 6) == pytest.approx(0.9, abs=1e-12)
    assert ngmi(3.4, 4.0, 6) == pytest.approx(0.9, abs=1e-12)


def test_ngmi_affine_in_gmi():
    h, m = 4.7, 6
    g = np.linspace(0.0, h, 12)
    vals = np.array([ngmi(gi, h, m) for gi in g])
    slopes = np.diff(vals) / np.diff(g)
    np.testing.assert_allclose(slopes, 1.0 / m, atol=1e-12)


def test_ngmi_rejects_nonpositive_m():
    with pytest.raises(ValueError):
        ngmi(3.0, 4.0, 0)


# --------------------------------------------------------------------- EVM

def test_evm_identity_is_zero():
    x = UNIFORM.tx_points()
    assert evm_percent(x, x) == 0.0


def test_evm_unit_error_ratio_is_100_percent():
    rng = np.random.default_rng(0)
    tx = UNIFORM.tx_points()[rng.integers(0, 64, 1000)]
    n = rng.normal(size=1000) + 1j * rng.normal(size=1000)
    n *= math.sqrt(np.sum(np.abs(tx) ** 2) / np.sum(np.abs(n) ** 2))
    assert evm_percent(tx + n, tx) == pytest.approx(100.0, abs=1e-9)


def test_evm_awgn_20db():
    rng = np.random.default_rng(5)
    tx = UNIFORM.tx_points()[rng.integers(0, 64, 100_000)]
    rx = awgn_transmit(tx, 20.0, rng)
    assert evm_percent(rx, tx) == pytest.approx(10.0, abs=0.2)


def test_evm_validation():
    with pytest.raises(ValueError):
        evm_percent(np.array([0j]), np.array([0j, 1j]))
    with pytest.raises(ValueError):
        evm_percent(np.array([1j]), np.array([0j]))


def test_snr_from_evm_values():
    assert snr_from_evm(100.0) == 0.0
    assert snr_from_evm(10.0) == pytest.approx(20.0, abs=1e-12)
    assert snr_from_evm(1.0) == pytest.approx(40.0, abs=1e-12)
    with pytest.raises(ValueError):
        snr_from_evm(0.0)
    with pytest.raises(ValueError):
        snr_from_evm(-3.0)


def test_snr_loopback_on_awgn():
    for snr in (5.0, 15.0, 25.0):
        rep = awgn_link_metrics(UNIFORM, snr, 30_000, seed=21)
        assert rep.snr_db == pytest.approx(snr, abs=0.3)
