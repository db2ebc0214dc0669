"""Distributed TDMA link scheduling for multi-transmit-receive mesh networks."""

__version__ = "0.1.0"
