"""Densities, empirical measures and Wasserstein-1 distances"""
