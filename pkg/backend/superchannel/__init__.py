"""Comb-referenced optical superchannel simulator.

One-sided PSD convention throughout: a white FM-noise floor h0 (Hz^2/Hz)
corresponds to a Lorentzian line of FWHM pi * h0.
"""

__version__ = "0.1.0"
