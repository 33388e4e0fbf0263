import os
from pathlib import Path

from omegaconf import OmegaConf

# library defaults ship next to this module; TNF_CONFIG_PATH points at a replacement file
CONFIG_PATH = os.getenv("TNF_CONFIG_PATH") or (Path(__file__).parent / "config.yaml")

config = OmegaConf.load(CONFIG_PATH)
