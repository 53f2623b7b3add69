"""Experiment orchestration: configs, training runs, evaluation and reports."""
