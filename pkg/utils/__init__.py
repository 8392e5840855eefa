"""
Utilities module for the reversibility toolkit.
"""
