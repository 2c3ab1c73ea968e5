#!/usr/bin/env python3
"""
Error Types for the Auction Bidder
One hierarchy for every failure the library reports
"""

from typing import Iterable


class BiddingError(Exception):
    """Base class for all bidder errors"""


class DomainError(BiddingError, ValueError):
    """A value lies outside its mathematical domain (negative bid, non-positive price)"""


class StructuralError(BiddingError, ValueError):
    """Dimensions or list lengths do not line up"""


class SizeError(BiddingError):
    """Exhaustive search would exceed the configured size cap"""


class ConfigError(BiddingError):
    """Settings failed to parse or validate"""


class PanelParseError(BiddingError):
    """A price file row could not be parsed"""

    def __init__(self, path, line: int, message: str):
        self.path = str(path)
        self.line = line
        super().__init__(f"{self.path}:{line}: {message}")


class PanelIntegrityError(BiddingError):
    """A price panel violates a key constraint (duplicate date/location/hour)"""


class DataGapError(BiddingError):
    """Whole days are missing inside a backtest range"""

    def __init__(self, missing_dates: Iterable):
        self.missing_dates = [str(d) for d in missing_dates]
        preview = ", ".join(self.missing_dates[:10])
        if len(self.missing_dates) > 10:
            preview += f", ... ({len(self.missing_dates)} total)"
        super().__init__(f"Missing days in range: {preview}")
