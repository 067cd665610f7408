"""randstruct: random-structure sampling, exact rational engines, and
zero-one experiments over quantifier-free diagrams."""

__version__ = "0.1.0"
