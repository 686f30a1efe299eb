"""日志配置服务: 控制台彩色输出、JSON 行格式与滚动文件日志."""

from __future__ import annotations

import json
import logging
import logging.handlers
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, ClassVar

import colorlog

TEXT_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

# 运行期间过于啰嗦的第三方日志
QUIET_LOGGERS = ("apscheduler", "uvicorn.access", "httpx")


class JsonFormatter(logging.Formatter):
    """单行 JSON 日志格式化器."""

    RESERVED: ClassVar[set[str]] = set(
        logging.LogRecord("", 0, "", 0, "", (), None).__dict__
    ) | {"message", "asctime"}

    def format(self, record: logging.LogRecord) -> str:
        payload: dict[str, Any] = {
            "ts": datetime.fromtimestamp(record.created, tz=timezone.utc).isoformat(),
            "level": record.levelname,
            "logger": record.name,
            "thread": record.threadName,
            "message": record.getMessage(),
        }
        for key, value in record.__dict__.items():
            if key not in self.RESERVED:
                payload[key] = value
        if record.exc_info:
            payload["exc"] = self.formatException(record.exc_info)
        return json.dumps(payload, default=str, ensure_ascii=False)


def setup_logging(
    level: str = "INFO",
    log_format: str = "text",
    log_file_path: str | None = None,
    max_size_mb: int = 10,
    backup_count: int = 5,
) -> logging.Logger:
    """配置根日志器.

    Args:
        level: 日志级别。
        log_format: "text" 为彩色控制台输出, "json" 为单行 JSON。
        log_file_path: 滚动文件路径, 为空则不写文件。
        max_size_mb: 单个日志文件上限。
        backup_count: 保留的历史文件数量。

    Returns:
        logging.Logger: 根日志器。
    """
    root = logging.getLogger()
    root.setLevel(level.upper())
    # 清除现有的处理器
    for handler in list(root.handlers):
        root.removeHandler(handler)
        handler.close()

    console = logging.StreamHandler()
    if log_format == "json":
        console.setFormatter(JsonFormatter())
    else:
        console.setFormatter(
            colorlog.ColoredFormatter(
                "%(log_color)s" + TEXT_FORMAT,
                datefmt="%Y-%m-%d %H:%M:%S",
            )
        )
    root.addHandler(console)

    if log_file_path:
        log_path = Path(log_file_path)
        log_path.parent.mkdir(parents=True, exist_ok=True)
        file_handler = logging.handlers.RotatingFileHandler(
            log_path,
            maxBytes=max_size_mb * 1024 * 1024,
            backupCount=backup_count,
            encoding="utf-8",
        )
        file_handler.setFormatter(
            JsonFormatter() if log_format == "json" else logging.Formatter(TEXT_FORMAT)
        )
        root.addHandler(file_handler)

    for name in QUIET_LOGGERS:
        logging.getLogger(name).setLevel(logging.WARNING)

    return root
