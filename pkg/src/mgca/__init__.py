"""Open-vocabulary temporal action localization."""
