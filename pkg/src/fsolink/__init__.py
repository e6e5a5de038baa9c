"""Desk-scale simulator for a rate-adaptive probabilistically shaped 64QAM
link over a time-varying free-space channel.

Layering: shaping/ccdm build the transmit side, channel realizes SNR traces
and waveform impairments, metrics scores received batches, airlut maps SNR
to achievable rate, dsprx recovers symbols from impaired waveforms, and
control runs the three-scheme adaptation campaign on top of it all.
"""

__version__ = "0.1.0"
