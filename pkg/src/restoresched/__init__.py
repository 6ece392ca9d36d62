"""Restoration-trajectory scheduling engine."""
