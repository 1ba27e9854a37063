"""Link-level simulation of rate-splitting multiple access in the 2-user MISO broadcast channel."""

__version__ = "0.1.0"
