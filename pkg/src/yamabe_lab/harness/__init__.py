"""Configuration, persistence, plotting and the command line."""
