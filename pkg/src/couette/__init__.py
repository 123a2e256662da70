"""Linear and nonlinear stability tools for plane Couette flow."""
__version__ = "0.1.0"
