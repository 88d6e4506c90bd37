"""Interacting particle systems under shared noise"""
