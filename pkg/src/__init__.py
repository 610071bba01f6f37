"""
Euler-Coriolis toolkit - Source Package
"""

# Package initialization
