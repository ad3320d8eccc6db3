"""Scenario loading, run orchestration, export and the command line."""
