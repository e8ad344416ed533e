"""Path-loss mitigation through dynamic spectrum access."""
