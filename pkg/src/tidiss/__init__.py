"""Translation-invariant Lindblad dissipators for the quantum harmonic oscillator."""

__version__ = "0.1.0"
