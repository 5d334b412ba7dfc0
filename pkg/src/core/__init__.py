"""Numerical core: channel algebra, instruments, asymptotic statistics and trajectories."""
