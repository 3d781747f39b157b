"""Diffusion-denoised randomized smoothing toolkit."""
