"""Collects one PASS/FAIL/SKIP line per acceptance criterion for the terminal summary."""

LINES = []
