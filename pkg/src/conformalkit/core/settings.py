import json
import tomllib
from importlib import resources
from pathlib import Path
from typing import Any

from pydantic import ValidationError

from conformalkit.core import defaults
from conformalkit.core.errors import ConfigurationError
from conformalkit.core.models.settings import ConformalKitSettings
from conformalkit.utils.validations import deep_merge, is_sub_struct
from conformalkit.utils.xdg.config import UserConfig


def _get_default_settings() -> dict[str, Any]:
    """Load the packaged default settings.

    Returns:
        dict[str, Any]: The contents of ``defaults/settings.toml``.
    """
    with resources.files(defaults).joinpath("settings.toml").open("rb") as file:
        return tomllib.load(file)


def read_settings_file(filepath: Path) -> dict[str, Any]:
    """Read a JSON or TOML settings file, chosen by suffix.

    Args:
        filepath (Path): The settings file.

    Returns:
        dict[str, Any]: The parsed table.

    Raises:
        ConfigurationError: If the file is missing, has another suffix, or
            cannot be parsed.
    """
    if not filepath.is_file():
        msg = f"'{filepath}' must be an existing settings file"
        raise ConfigurationError(msg)
    try:
        match filepath.suffix:
            case ".toml":
                with filepath.open("rb") as file:
                    return tomllib.load(file)
            case ".json":
                with filepath.open(encoding="utf-8") as file:
                    loaded = json.load(file)
            case _:
                msg = f"'{filepath}' must be a .toml or .json file"
                raise ConfigurationError(msg)
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as error:
        msg = f"{filepath}: {error}"
        raise ConfigurationError(msg) from error
    if not isinstance(loaded, dict):
        msg = f"{filepath}: the top level must be a table"
        raise ConfigurationError(msg)
    return loaded


def _validate_layer(
    source: str, layer: dict[str, Any], default: dict[str, Any]
) -> None:
    """Reject a settings layer with keys or value types unknown to the defaults.

    Raises:
        ConfigurationError: If the layer is not a structural subset of the
            defaults.
    """
    if not is_sub_struct(default, layer):
        msg = f"{source}: settings are structurally different from the default settings"
        raise ConfigurationError(msg)


def load_settings(
    filepath: Path | None = None,
    *,
    overrides: dict[str, Any] | None = None,
    user_config: UserConfig | None = None,
) -> ConformalKitSettings:
    """Load layered settings.

    Layers, lowest first: packaged defaults, the user settings file,
    ``filepath`` and ``overrides`` (typically command-line flags).

    Args:
        filepath (Path, optional): A JSON or TOML settings file.
            Defaults to None.
        overrides (dict[str, Any], optional): Nested overrides.
            Defaults to None.
        user_config (UserConfig, optional): Where to find the user settings
            file. Defaults to the platform location.

    Returns:
        ConformalKitSettings: The validated settings.

    Raises:
        ConfigurationError: On structural or value errors in any layer.

    Examples:
        >>> load_settings(user_config=UserConfig(Path("/nonexistent"))).run.alpha
        0.1
    """
    default = _get_default_settings()
    layers = [("user settings", (user_config or UserConfig()).read_user_config_file())]
    if filepath is not None:
        layers.append((str(filepath), read_settings_file(filepath)))
    if overrides:
        layers.append(("command-line flags", overrides))
    merged = default
    for source, layer in layers:
        _validate_layer(source, layer, default)
        merged = deep_merge(merged, layer)
    try:
        return ConformalKitSettings.model_validate(merged)
    except ValidationError as error:
        msg = f"invalid settings: {error}"
        raise ConfigurationError(msg) from error
