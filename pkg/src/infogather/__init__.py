"""Multi-robot information gathering: trajectory planning by local search and safe tracking control."""

__version__ = "0.1.0"
