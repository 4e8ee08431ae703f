"""Third-order Volterra equalizers with structurally reduced kernel sets for IM/DD links."""

__version__ = "0.1.0"
