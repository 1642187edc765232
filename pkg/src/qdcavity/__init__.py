"""Few-photon coherent control of a quantum-dot exciton in a micropillar cavity."""

__version__ = "0.1.0"
