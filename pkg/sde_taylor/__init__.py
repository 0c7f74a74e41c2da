# sde_taylor: strong Taylor-Ito / Taylor-Stratonovich schemes driven by
# Legendre-expanded iterated stochastic integrals
__version__ = "0.1.0"
