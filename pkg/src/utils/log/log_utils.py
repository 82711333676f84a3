import logging
from logging import Logger

logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
    datefmt='%d/%m/%Y %H:%M:%S'
)

# numba logs its compilation passes at DEBUG through the root configuration
logging.getLogger('numba').setLevel(logging.WARNING)


class LogUtils:
    """
    Hands out the loggers used by the lab's services and controllers.

    All of them share the format set at import; `level` optionally
    overrides the verbosity of the loggers this instance creates.
    """
    def __init__(self, level: int | str | None = None):
        self._level = level

    def get_logger(self, name: str) -> Logger:
        """
        Return the logger registered under `name`.

        Parameters:
            name (str): Usually the module's __name__.

        Returns:
            Logger: Logger using the global format.
        """
        logger = logging.getLogger(name)
        if self._level is not None:
            logger.setLevel(self._level)
        return logger
