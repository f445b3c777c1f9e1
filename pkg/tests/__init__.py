"""Test package for hiergap."""
