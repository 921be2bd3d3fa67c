"""Desk-scale simulator for learning sparse Pauli Hamiltonians from time-evolution queries."""
