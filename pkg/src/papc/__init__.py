"""Perceptual attention-based predictive control: MPC expert, pixel-space
trajectory splines, ROI attention and a Bayesian steering network."""

__version__ = "0.1.0"
