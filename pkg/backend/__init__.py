"""Causal card-game arena backend."""
