"""Car-following simulation and string-stability analysis for ACC, CACC and Eco-CACC."""

__version__ = "0.1.0"
