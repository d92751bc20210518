from typing import Literal

from pydantic import ConfigDict
from pydantic_settings import BaseSettings


class Settings(BaseSettings):

    model_config = ConfigDict(env_file=".env", env_file_encoding="utf-8", env_prefix="MFGAP_", extra="ignore")

    seed: int = 20240611
    workers: int = 1
    out_dir: str = "results"
    output_format: Literal["json", "csv"] = "json"
    environment: str = "development"

settings = Settings()
