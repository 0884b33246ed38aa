"""Bogoliubov c-number substitution on truncated Fock spaces."""

__version__ = "0.1.0"
