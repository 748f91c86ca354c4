"""Tiled joint diffusion sampling with guided and variance-corrected overlap fusion."""
