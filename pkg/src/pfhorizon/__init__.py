"""Particle filters vs. sequential quasi-Monte Carlo over long horizons on a 1-D linear Gaussian model."""
