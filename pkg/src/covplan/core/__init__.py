"""covplan core modules."""
