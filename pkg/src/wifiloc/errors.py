"""Exception hierarchy shared by every wifiloc module."""


class WifilocError(Exception):
    """Base class for all library errors."""


class DataError(WifilocError, ValueError):
    """Invalid, empty or inconsistent fingerprint data."""


class UnrecognizedScanError(DataError):
    """A scan contains no radio known to the registry."""


class InsufficientDataError(DataError):
    """Not enough fingerprints to train or split."""


class TrainingError(WifilocError):
    """A classifier or meta-learner could not be fitted."""


class FeatureSpaceMismatch(WifilocError, ValueError):
    """Model and input were built on different radio orderings."""
