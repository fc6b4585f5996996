"""Simulator for measurement-based preparation of magnonic GKP states."""
