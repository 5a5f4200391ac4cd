import os
import tomllib
from pathlib import Path
from typing import Any

import tomli_w

from conformalkit.core.errors import ConfigurationError
from conformalkit.utils.xdg.constants import (
    CK_APP_DIR_NAME,
    CK_USER_SETTINGS_FILE_NAME,
    SYSTEM,
    USER_CONFIG_DIRS,
)


def resolve_platform_dir(
    table: dict[str, tuple[str | None, str]], system: str = SYSTEM
) -> Path:
    """Resolve a per-platform base directory, honouring its environment variable.

    The environment is read at call time.

    Args:
        table (dict[str, tuple[str | None, str]]): Environment variable and
            fallback path per operating system.
        system (str, optional): The operating system name. Defaults to the
            running system.

    Raises:
        ConfigurationError: If the operating system is not supported.

    Returns:
        Path: The expanded base directory.

    Examples:
        >>> resolve_platform_dir({"Darwin": (None, "/tmp/x")}, "Darwin")
        PosixPath('/tmp/x')
    """
    if system not in table:
        msg = f"Unsupported operating system: {system}"
        raise ConfigurationError(msg)
    env_var, fallback = table[system]
    value = os.environ.get(env_var, "") if env_var else ""
    return Path(value or fallback).expanduser()


class UserConfig:
    """Locates, reads and writes the optional user settings file.

    Nothing is created on disk until :meth:`save_user_config_file` is called.

    Attributes:
        user_config_dir (Path): The user configuration directory.
        user_config_file (Path): The settings TOML inside it.
    """

    def __init__(self, user_config_dir: Path | None = None) -> None:
        """Initialize the UserConfig instance.

        Args:
            user_config_dir (Path, optional): The user configuration directory.
                Defaults to ``<platform config dir>/conformalkit``.
        """
        self.user_config_dir = (
            user_config_dir or resolve_platform_dir(USER_CONFIG_DIRS) / CK_APP_DIR_NAME
        )
        self.user_config_file = self.user_config_dir / CK_USER_SETTINGS_FILE_NAME

    def read_user_config_file(self) -> dict[str, Any]:
        """Return the parsed settings file, or an empty table when absent.

        Raises:
            ConfigurationError: If the file is not valid TOML.
        """
        if not self.user_config_file.is_file():
            return {}
        try:
            with self.user_config_file.open("rb") as file:
                return tomllib.load(file)
        except tomllib.TOMLDecodeError as error:
            msg = f"{self.user_config_file}: {error}"
            raise ConfigurationError(msg) from error

    def save_user_config_file(self, settings: dict[str, Any]) -> None:
        """Write settings as TOML, creating the directory when needed."""
        self.user_config_dir.mkdir(parents=True, exist_ok=True)
        with self.user_config_file.open("wb") as file:
            tomli_w.dump(settings, file)
