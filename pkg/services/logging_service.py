import logging
import os
import sys

LOG_FORMAT = '%(asctime)s - %(levelname)s - %(message)s'


class SafeStreamHandler(logging.StreamHandler):
    def emit(self, record):
        try:
            super().emit(record)
        except UnicodeEncodeError:
            msg = self.format(record)
            safe_msg = msg.encode('ascii', errors='replace').decode('ascii')
            record.msg = safe_msg
            record.args = None
            super().emit(record)


logger = logging.getLogger('bohmflux')

if not logger.handlers:
    _stream = SafeStreamHandler(sys.stderr)
    _stream.setFormatter(logging.Formatter(LOG_FORMAT))
    logger.addHandler(_stream)
    logger.setLevel(os.getenv('BOHMFLUX_LOG_LEVEL', 'INFO').upper())
    logger.propagate = False


def configure_logging(level: str = 'INFO', log_file: str = None) -> logging.Logger:
    """Apply level and optional UTF-8 log file to the project logger."""
    logger.setLevel(level.upper())
    if log_file:
        known = {getattr(h, 'baseFilename', None) for h in logger.handlers}
        path = os.path.abspath(log_file)
        if path not in known:
            file_handler = logging.FileHandler(path, encoding='utf-8')
            file_handler.setFormatter(logging.Formatter(LOG_FORMAT))
            logger.addHandler(file_handler)
    return logger
