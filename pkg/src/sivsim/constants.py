# CODATA 2018 exact values (SI).
PLANCK = 6.62607015e-34  # J s
BOLTZMANN = 1.380649e-23  # J / K

MHZ = 1e6
GHZ = 1e9
NS = 1e-9
