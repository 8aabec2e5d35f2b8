import logging

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def setup_logging(level="INFO"):
    """Configure the root logger once for command line runs."""
    if isinstance(level, str):
        level = logging.getLevelName(level.upper())
        if not isinstance(level, int):
            level = logging.INFO
    logging.basicConfig(level=level, format=LOG_FORMAT)
    logging.getLogger().setLevel(level)


def log_run_error(e, context="", file_path=""):
    """Simple logger for failed runs, commands and file operations."""
    logger = logging.getLogger("consensus")

    if file_path:
        logger.error(f"❌ Error {context} for {file_path}:")
    else:
        logger.error(f"❌ Error {context}:")

    logger.error(f"   Errors: {e}")
