"""Hybrid eligibility-criteria engine for clinical cohort selection."""
__version__ = "0.1.0"
