"""Desk-scale STDANet video deblurring on a NumPy reverse-mode tensor engine."""

from stdanet.config import CONFIG, NetworkConfig, RunConfig
from stdanet.network import STDANet, STDANetStack, build_model

__version__ = CONFIG["version"].lstrip("v")

__all__ = ["NetworkConfig", "RunConfig", "STDANet", "STDANetStack", "build_model", "__version__"]
