"""Simulator for multiparty quantum broadcast protocols."""
