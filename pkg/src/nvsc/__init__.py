"""Very-low-rate parametric speech codec with classic and neural (SampleRNN) decoders."""

__version__ = "0.1.0"
