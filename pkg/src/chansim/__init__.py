"""chansim: finite-blocklength simulation of noisy channels from shared randomness.

Layers, bottom up:
  core_prob     distributions, channels, entropy quantities
  typeclasses   exact types, joint types, typicality, class sizes
  covering      covering families of conditional type classes
  simulate      block simulation codes built from covering families
  fidelity      fidelity criteria and derandomized (fixed-index) codes
  zero_error    exact factorization of a channel through a small alphabet
  applications  randomness dilution, rate-distortion via simulation
  cli           command line front end
"""

__version__ = "0.1.0"
