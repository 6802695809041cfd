"""Level-set topology optimisation of void / isotropic / fibre composites with fibre orientation."""

from .config import OptConfig, load_config, parse_config
from .optimizer import run
from .tensor2d import MaterialCatalog, build_catalog

__all__ = ["OptConfig", "MaterialCatalog", "build_catalog", "load_config", "parse_config", "run"]
__version__ = "0.1.0"
