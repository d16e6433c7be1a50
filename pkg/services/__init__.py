"""
I/O services for coalgene.

Run configuration parsing and validation, and atomic CSV/JSON output.
"""
