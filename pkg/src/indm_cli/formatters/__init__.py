"""Console and file formatters for the CLI."""
