"""Hybrid quantum circuit toolkit.

Subpackages:
  weyl        operator-space foundation (shift/weight algebra, decompositions)
  dilated     exact dense simulation on system + outcome-register space
  transition  Haar- and outcome-averaged superoperator gates and circuits
  sff         spectral form factors for hybrid Floquet circuits
  stochastic  bit-string Monte Carlo for adaptive U(1)/East models
  scaling     finite-size scaling collapse and critical-rate estimation
  cli         batch experiment runner
"""

__version__ = "0.1.0"
