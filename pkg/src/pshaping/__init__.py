"""Probabilistic constellation shaping for AWGN and multi-span fiber links.

Modules
-------
constellation
    PAM/QAM lattices with Gray labels, moments, table I/O.
pmf
    PMFs, Maxwell-Boltzmann family, presets, seeded sampling.
air
    LLRs, Monte-Carlo and quadrature achievable rates.
mbopt
    MB optimization on AWGN and the fixed-PMF range search.
gnmodel
    Modulation-dependent GN model and its sweeps.
nlopt
    PMF optimization against the GN model.
ssfm
    Desk-scale dual-polarization split-step simulator.
cli
    Command-line experiment runner.
"""

__version__ = "0.1.0"
