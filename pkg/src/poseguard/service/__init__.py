"""HTTP review service: read-mostly API over a session corpus plus an
append-only decisions log for the human review loop."""

from .app import create_app

__all__ = ["create_app"]
