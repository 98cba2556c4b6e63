"""Co-optimisation of transmission expansion and strategic bidding in nodal markets."""

__version__ = "0.1.0"
