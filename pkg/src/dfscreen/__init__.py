"""Two-stage dynamic few-shot screening for systematic-review triage."""

__version__ = "0.1.0"
