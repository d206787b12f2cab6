"""Cryptographic primitives: group arithmetic, keyed labels, additively
homomorphic counters, tag PRFs, and payload sealing."""
