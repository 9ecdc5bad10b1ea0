"""The two benchmark applications and their single-threaded reference oracles."""
