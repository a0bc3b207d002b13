"""runwaylab: a desk-scale causal transformer whose attention can be
softly rewired away from long indirect-path ("runway") edges, plus a
verification suite that checks the accompanying theory numerically."""

__version__ = "0.1.0"
