"""Newtonian mechanics on Riemannian manifolds: expressions, geometry, dynamics and checks."""
