"""Linear advection-diffusion and Fokker-Planck engines"""
