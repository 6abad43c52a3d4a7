"""Subject-independent stratified splits and fairness-aware evaluation for affect datasets."""

__version__ = "0.1.0"
