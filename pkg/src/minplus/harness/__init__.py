"""Example systems, configuration, simulation and the command line driver."""
