"""Mean-field co-authorship dynamics: simulation, closed forms, estimators."""

__version__ = "0.1.0"
