"""Head-pose deviation event detection and review tooling for e-learning
session recordings: ingestion, sliding-window detection, evaluation sweeps,
biometric statistics, a synthetic-session oracle, a CLI and a review API.
"""

__version__ = "0.1.0"
