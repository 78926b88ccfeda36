"""Scenario registry, hypothesis checking, experiment runner and report emission."""
