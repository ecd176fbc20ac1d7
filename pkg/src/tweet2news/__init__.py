"""Unsupervised tweet-to-news conversion: style transfer plus proposition merging."""

__version__ = "0.1.0"
