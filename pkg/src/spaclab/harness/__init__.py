"""Experiment harness: instance generators, configs, sweeps and the CLI."""
