"""Common spatial pattern filters embedded in small convolutional networks."""

__version__ = "0.1.0"
