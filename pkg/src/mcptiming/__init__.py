"""Monte Carlo simulation and analysis of MCP annihilation-photon coincidence timing."""

__version__ = "0.1.0"
