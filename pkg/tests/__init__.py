"""Test package for detblind."""
