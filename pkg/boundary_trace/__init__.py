"""C2 boundary values on planar domains: Whitney cubes, split boundaries and Lipschitz selections."""

__version__ = "0.1.0"
