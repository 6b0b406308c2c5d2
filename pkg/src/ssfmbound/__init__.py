"""Split-step simulation of the noisy nonlinear Schroedinger cascade and its capacity bound."""
