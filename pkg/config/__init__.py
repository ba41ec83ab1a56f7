"""
Directory for all the service-specific configuration
"""

