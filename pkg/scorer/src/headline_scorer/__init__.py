"""headline_scorer: batch sentiment scoring of news headlines to CSV."""

__version__ = "0.1.0"
