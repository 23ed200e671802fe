"""Classical and free convolution semigroups of complete Bernstein functions."""

__version__ = "0.1.0"
