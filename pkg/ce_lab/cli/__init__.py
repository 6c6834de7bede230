"""Command-line entrypoints for ce-lab."""
