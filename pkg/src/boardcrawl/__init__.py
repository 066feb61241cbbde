"""Bulletin-board crawler with attachment classification and AttachRank search."""

__version__ = "0.1.0"

USER_AGENT = "boardcrawl/0.1"
