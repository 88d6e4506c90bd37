"""N-player Nash systems and their master-field projections"""
