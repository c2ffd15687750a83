"""waveray: spectral polarised wave-optics path tracing with a phase-space oracle."""

__version__ = "0.1.0"
