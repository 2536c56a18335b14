"""
Learning from several diverse noisy labelings through knowledge-guided target abduction.
"""

__version__ = '0.1.0'
