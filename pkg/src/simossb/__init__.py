"""Simultaneous one-shot sealed-bid auction laboratory."""
