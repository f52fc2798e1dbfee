"""geoscholar: country-mention attention networks, scholarly funding and
migration flows, and event-effect estimation over publication corpora."""

__version__ = "0.1.0"
