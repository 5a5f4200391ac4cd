from pathlib import Path

from conformalkit.utils.xdg.config import resolve_platform_dir
from conformalkit.utils.xdg.constants import (
    CK_APP_DIR_NAME,
    CK_LOG_FILE_NAME,
    CK_RUNS_DIR_NAME,
    USER_DATA_DIRS,
)


class UserData:
    """Manages the user data directory holding the log file and run outputs.

    Attributes:
        user_data_dir (Path): The user data directory.
        log_file (Path): The log file within it.
        runs_dir (Path): Default parent of command outputs.
    """

    def __init__(self, user_data_dir: Path | None = None) -> None:
        """Initialize the UserData instance and create the directory.

        Args:
            user_data_dir (Path, optional): The user data directory.
                Defaults to ``<platform data dir>/conformalkit``.
        """
        self.user_data_dir = (
            user_data_dir or resolve_platform_dir(USER_DATA_DIRS) / CK_APP_DIR_NAME
        )
        self.log_file = self.user_data_dir / CK_LOG_FILE_NAME
        self.runs_dir = self.user_data_dir / CK_RUNS_DIR_NAME
        self.user_data_dir.mkdir(parents=True, exist_ok=True)
