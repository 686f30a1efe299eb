from __future__ import annotations

from functools import lru_cache
from pathlib import Path
from typing import Any

from dotenv import dotenv_values, load_dotenv
from pydantic import ValidationError, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from app.infrastructure.error_handling_service import ConfigError

# Load .env file from the backend directory using pathlib
dotenv_path = Path(__file__).resolve().parent.parent.parent / ".env"
load_dotenv(dotenv_path=dotenv_path)


class Settings(BaseSettings):
    # Network topology
    NET_PEERS: int = 5
    NET_ORDERERS: int = 3
    HOST: str = "127.0.0.1"
    ORDERER_BASE_PORT: int = 7050
    PEER_BASE_PORT: int = 7150
    ADMIN_PORT: int = 8000
    DATA_DIR: str = "./data"

    # Pipeline
    MODE: str = "stream"
    BLOCK_SIZE: int = 10
    BLOCK_TIMEOUT_MS: int = 1000
    SIG_WORKERS: int = 6
    QUEUE_CAPACITY: int = 256
    HOUSEKEEPING_QUEUE_CAPACITY: int = 1024
    TX_INDEX_CAPACITY: int = 0  # 0: 整个运行期间保留全部提交事件
    STRIPES: int = 64
    CACHE_ENABLED: bool = True
    CACHE_MAX_SIZE: int = 10000

    # Persistence
    FLUSH_BYTES: int = 64 * 1024
    FLUSH_TIMEOUT_MS: int = 100
    FSYNC: bool = True
    CHECKPOINT_INTERVAL_S: int = 10

    # Crypto and policies
    CRYPTO: str = "real"
    YCSB_POLICY: str = "1:peer0"
    SCM_POLICY: str = "2:peer0,peer1,peer2,peer3,peer4"
    ENDORSE_RETRIES: int = 3

    # Ordering
    ELECTION_TIMEOUT_MIN_MS: int = 150
    ELECTION_TIMEOUT_MAX_MS: int = 300
    HEARTBEAT_INTERVAL_MS: int = 50
    ORDER_TIMEOUT_S: float = 5.0
    REPLICATION_BATCH: int = 256

    # Bench
    OP_TIMEOUT_S: float = 10.0

    # Logging Configuration
    LOG_LEVEL: str = "INFO"
    LOG_FORMAT: str = "text"
    LOG_FILE_PATH: str = ""
    LOG_MAX_SIZE_MB: int = 10
    LOG_BACKUP_COUNT: int = 5

    # Monitoring
    MONITORING_ENABLED: bool = False

    @field_validator("MODE")
    @classmethod
    def check_mode(cls, v: str) -> str:
        if v not in {"stream", "block"}:
            raise ValueError("MODE must be 'stream' or 'block'")
        return v

    @field_validator("CRYPTO")
    @classmethod
    def check_crypto(cls, v: str) -> str:
        if v not in {"real", "null"}:
            raise ValueError("CRYPTO must be 'real' or 'null'")
        return v

    @field_validator("STRIPES")
    @classmethod
    def check_stripes(cls, v: int) -> int:
        if v <= 0 or v & (v - 1):
            raise ValueError("STRIPES must be a positive power of two")
        return v

    @field_validator("SIG_WORKERS")
    @classmethod
    def check_sig_workers(cls, v: int) -> int:
        if not 1 <= v <= 32:
            raise ValueError("SIG_WORKERS must be within 1..32")
        return v

    @field_validator(
        "FLUSH_BYTES", "FLUSH_TIMEOUT_MS", "BLOCK_SIZE", "BLOCK_TIMEOUT_MS"
    )
    @classmethod
    def check_positive(cls, v: int) -> int:
        if v <= 0:
            raise ValueError("must be > 0")
        return v

    @field_validator("TX_INDEX_CAPACITY")
    @classmethod
    def check_non_negative(cls, v: int) -> int:
        if v < 0:
            raise ValueError("TX_INDEX_CAPACITY must be >= 0")
        return v

    @model_validator(mode="after")
    def check_queue_capacity(self) -> Settings:
        if self.QUEUE_CAPACITY < self.SIG_WORKERS:
            raise ValueError("QUEUE_CAPACITY must be >= SIG_WORKERS")
        if self.ELECTION_TIMEOUT_MIN_MS >= self.ELECTION_TIMEOUT_MAX_MS:
            raise ValueError("ELECTION_TIMEOUT_MIN_MS must be < ELECTION_TIMEOUT_MAX_MS")
        return self

    # Computed properties
    @property
    def data_path(self) -> Path:
        return Path(self.DATA_DIR)

    @property
    def peer_ids(self) -> list[str]:
        return [f"peer{i}" for i in range(self.NET_PEERS)]

    @property
    def orderer_ids(self) -> list[str]:
        return [f"orderer{i}" for i in range(self.NET_ORDERERS)]

    model_config = SettingsConfigDict(env_file=".env", extra="ignore")


def load_settings(
    config_file: str | Path | None = None, **overrides: Any
) -> Settings:
    """按 flags > key=value 文件 > 环境变量 > 默认值 的优先级构造配置."""
    values: dict[str, Any] = {}
    if config_file is not None:
        path = Path(config_file)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        values.update(
            {k.upper(): v for k, v in dotenv_values(path).items() if v is not None}
        )
    values.update({k.upper(): v for k, v in overrides.items() if v is not None})
    try:
        return Settings(**values)
    except ValidationError as e:
        raise ConfigError(str(e)) from e


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    return Settings()
