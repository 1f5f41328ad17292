"""muspike: benchmark and evaluation suite for spiking symbolic music models."""

__version__ = "0.1.0"
