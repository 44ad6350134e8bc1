"""Iterated test-driven development modelled as a dynamical system."""
