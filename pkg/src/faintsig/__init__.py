"""Deepfake forensics from faint facial signals: chrominance-PPG and pixel
autoregression fingerprints scored by a small asymmetric-convolution net."""

__version__ = "0.1.0"
