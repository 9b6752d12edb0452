"""Probabilistic Byzantine cluster-sending."""
