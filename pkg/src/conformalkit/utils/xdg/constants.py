import platform

SYSTEM = platform.system()

# Per platform: (environment variable or None, fallback path)

USER_CONFIG_DIRS: dict[str, tuple[str | None, str]] = {
    "Linux": ("XDG_CONFIG_HOME", "~/.config"),
    "Darwin": (None, "~/Library/Preferences"),
    "Windows": ("APPDATA", "~/AppData/Roaming"),
}
USER_DATA_DIRS: dict[str, tuple[str | None, str]] = {
    "Linux": ("XDG_DATA_HOME", "~/.local/share"),
    "Darwin": (None, "~/Library"),
    "Windows": ("LOCALAPPDATA", "~/AppData/Local"),
}

CK_APP_DIR_NAME = "conformalkit"
CK_USER_SETTINGS_FILE_NAME = "settings.toml"
CK_LOG_FILE_NAME = "conformalkit.log"
CK_RUNS_DIR_NAME = "runs"
