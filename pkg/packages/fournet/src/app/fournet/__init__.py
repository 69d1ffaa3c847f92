"""FourNet: Gaussian-activation networks fitted in the Fourier domain for option pricing"""

__version__ = "0.1.0"
