"""Voronoi constellation toolkit: cubic coding lattices shaped by dense
low-dimensional lattices, with exact encoders/decoders, mutual-information
and LLR estimation for very large constellations, and an AWGN simulator."""

__version__ = "0.1.0"
