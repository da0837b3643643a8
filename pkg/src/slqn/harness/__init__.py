"""Scenarios, Monte Carlo comparison, certification runs and the CLI."""
