"""Simulation and bound evaluation for the contact process on stars, trees and random graphs."""
__version__ = "0.1.0"
