"""Heralded photon-number path entanglement: analytic model, Fock-space simulator and CHSH optimiser."""

__version__ = "0.1.0"
