"""Slot-based simulator for multi-channel access RRM mechanisms in 5G NR."""

__version__ = "0.1.0"
