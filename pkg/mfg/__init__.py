"""Mean field game systems, linearizations and stability diagnostics"""
