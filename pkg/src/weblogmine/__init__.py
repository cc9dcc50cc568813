"""Web usage mining: access-log cleaning, sessionization, ICA feature
reduction, penalized fuzzy clustering and kernel classifiers."""

__version__ = "0.1.0"
