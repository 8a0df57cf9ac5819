"""
Mirror-descent preference optimization on small chain MDPs.
"""
__version__ = '0.1.0'
