"""Compiled inner loops; see :mod:`pacomm._backend` for backend selection."""
