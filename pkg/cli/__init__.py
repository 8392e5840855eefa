"""
Command line module for the reversibility toolkit.
"""
