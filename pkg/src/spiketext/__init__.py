"""Spiking text classification by conversion from a tailored TextCNN plus surrogate-gradient fine-tuning."""

__version__ = "0.1.0"
