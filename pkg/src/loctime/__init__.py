"""Monte Carlo and quadrature checks for central limit theorems of integrated
moments of Brownian local-time increments."""

__version__ = "0.1.0"
