"""Transfer-learning 1D ConvNet for network intrusion detection."""

__version__ = "0.1.0"
