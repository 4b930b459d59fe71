"""LoRaWAN capacity, collision and trace analysis toolkit."""

__version__ = "0.1.0"
