"""covplan commands."""
