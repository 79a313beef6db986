"""Optimal-stopping relay selection with non-negligible probing time."""
