"""Conditional SampleRNN decoder: model, output distribution, training and checkpoints."""
