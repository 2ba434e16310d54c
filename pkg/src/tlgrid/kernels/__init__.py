"""Hot loops: ``loops`` (numba) and ``vectorized`` (numpy) share one interface."""
