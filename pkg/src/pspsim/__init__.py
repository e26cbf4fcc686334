"""Progressive second-price auction: mechanics, bidding drivers and latency simulation."""

__version__ = "0.1.0"
