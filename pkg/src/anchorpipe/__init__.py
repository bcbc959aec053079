"""anchorpipe: words → facial action units + head pose → synthesized face frames."""
__version__ = "0.1.0"
