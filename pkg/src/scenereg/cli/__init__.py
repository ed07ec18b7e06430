"""Command line front end"""

from .core import CommandOutcome, PipelineCli

__all__ = ["CommandOutcome", "PipelineCli"]
