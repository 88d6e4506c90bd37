"""Hamiltonians, local and mollified couplings, assumption probes"""
