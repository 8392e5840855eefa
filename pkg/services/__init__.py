"""
Services module for the reversibility toolkit.
"""
