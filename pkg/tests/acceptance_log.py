"""Criterion number -> (passed, one-line detail), filled by the acceptance tests."""

RESULTS: dict[int, tuple[bool, str]] = {}
