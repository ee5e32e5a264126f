"""Experiment harnesses: booking scenarios, property checkers, chain runs, benchmarks."""
