"""Topological analysis of mixer activity in Bitcoin address-transaction graphs."""

__version__ = "0.1.0"
