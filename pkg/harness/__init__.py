"""Experiment configuration, sweeps, rate fits and run artifacts"""
