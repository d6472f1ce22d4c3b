"""The evpose command line: argument parsing, run configuration and image export."""
