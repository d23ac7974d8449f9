# Licensed under an MIT open source license - see LICENSE
"""
This package contains the coarse_cluster tests.
"""
