"""POD versus sampling rate at 35 dB SNR for 1 to 3 primary users."""
from _sweep import main

if __name__ == "__main__":
    main("fig3_snr35.json", "fig3")
