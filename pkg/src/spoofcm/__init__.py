"""Anti-spoofing countermeasure toolkit built around attentive activations."""

__version__ = "0.1.0"
