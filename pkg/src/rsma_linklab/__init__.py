"""Link-level toolkit for rate-splitting multiple access in correlated MISO downlinks."""

__version__ = "0.1.0"
