"""Noise-free POD versus sampling rate for 1 to 3 primary users."""
from _sweep import main

if __name__ == "__main__":
    main("fig2_noise_free.json", "fig2")
