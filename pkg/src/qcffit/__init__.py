"""qcffit: Compton form factor extraction with classical and simulated-quantum regressors."""

__version__ = "0.1.0"
