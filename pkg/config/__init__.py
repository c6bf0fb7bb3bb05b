"""
配置模块初始化
"""
from .settings import settings

__all__ = ["settings"]
