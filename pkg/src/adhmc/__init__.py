"""HMC and alternating-direction HMC with general momentum distributions."""
