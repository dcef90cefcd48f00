"""Evaluation protocols and ablation studies."""
