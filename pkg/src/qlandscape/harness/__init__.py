"""Experiment runner: configuration, pipelines, tables, figures and the CLI."""
