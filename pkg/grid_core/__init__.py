"""Periodic grids, fields and discrete operators"""
