"""Wire formats: JSON model files and CSV/JSON result files."""
