"""Reinshard: dual PoW/PoS chain-pairs with VDF-paced leadership and auto-sharding."""

__version__ = "0.1.0"
