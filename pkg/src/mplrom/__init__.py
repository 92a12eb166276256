"""Local POD reduced-order modeling of 1D viscous Burgers with regression
surrogates that predict reduced-model error and required basis dimension."""

__version__ = "0.1.0"
