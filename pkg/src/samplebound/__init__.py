"""Rate-distortion, dispersion and converse sample-complexity bounds for
finite learning problems with a fixed randomized learner."""

__version__ = "0.1.0"
