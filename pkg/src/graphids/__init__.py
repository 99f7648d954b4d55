"""Self-supervised NetFlow intrusion detection."""
__version__ = "0.1.0"
