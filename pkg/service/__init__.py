"""
The root module for the entire application: learning, applying and evaluating universal frequential
perturbations.

Everything outside this module can be considered a static dependency
"""
