"""
Logger module for the surgvision toolkit.
Console logging for every run, plus optional file logging with rotation.
"""

import logging
import logging.handlers
import os
import sys
from datetime import datetime
from typing import Optional


LOGGER_NAME = 'surgvision'
LOG_FORMAT = '%(asctime)s - %(levelname)s - %(message)s'
DATE_FORMAT = '%Y-%m-%d %H:%M:%S'


class ToolkitLogger:
    """Centralized logger for the toolkit."""

    def __init__(self, log_file_path: Optional[str] = None, max_bytes: int = 10485760,
                 backup_count: int = 5, console_level: int = logging.WARNING):
        """
        Initialize the logger with console logging and optional file logging.

        Args:
            log_file_path: Path to the log file, or None for console only
            max_bytes: Maximum size of log file before rotation (default: 10MB)
            backup_count: Number of backup files to keep (default: 5)
            console_level: Minimum level written to stderr
        """
        self.log_file_path = log_file_path
        self.logger = logging.getLogger(LOGGER_NAME)
        self.logger.setLevel(logging.DEBUG)
        self.logger.propagate = False

        # Clear any existing handlers
        self.logger.handlers.clear()

        formatter = logging.Formatter(LOG_FORMAT, datefmt=DATE_FORMAT)

        console_handler = logging.StreamHandler(sys.stderr)
        console_handler.setLevel(console_level)
        console_handler.setFormatter(formatter)
        self.logger.addHandler(console_handler)

        if log_file_path:
            # Create logs directory if it doesn't exist
            log_dir = os.path.dirname(log_file_path)
            if log_dir and not os.path.exists(log_dir):
                os.makedirs(log_dir)

            file_handler = logging.handlers.RotatingFileHandler(
                log_file_path,
                maxBytes=max_bytes,
                backupCount=backup_count
            )
            file_handler.setLevel(logging.DEBUG)
            file_handler.setFormatter(formatter)
            self.logger.addHandler(file_handler)

    def log_debug(self, message: str) -> None:
        """Log a debug message."""
        try:
            self.logger.debug(message)
        except Exception as e:
            print(f"[DEBUG] {datetime.now().strftime(DATE_FORMAT)} - {message}", file=sys.stderr)
            print(f"[ERROR] Logging failed: {e}", file=sys.stderr)

    def log_info(self, message: str) -> None:
        """
        Log an informational message.

        Args:
            message: The message to log
        """
        try:
            self.logger.info(message)
        except Exception as e:
            # Fallback to console if logging fails
            print(f"[INFO] {datetime.now().strftime(DATE_FORMAT)} - {message}", file=sys.stderr)
            print(f"[ERROR] Logging failed: {e}", file=sys.stderr)

    def log_error(self, message: str, exception: Optional[Exception] = None) -> None:
        """
        Log an error message with optional exception details.

        Args:
            message: The error message to log
            exception: Optional exception object for additional context
        """
        try:
            if exception:
                exception_type = type(exception).__name__
                self.logger.error(f"{message} - {exception_type}: {str(exception)}")
            else:
                self.logger.error(message)
        except Exception as e:
            print(f"[ERROR] {datetime.now().strftime(DATE_FORMAT)} - {message}", file=sys.stderr)
            if exception:
                print(f"[ERROR] Exception: {exception}", file=sys.stderr)
            print(f"[ERROR] Logging failed: {e}", file=sys.stderr)

    def log_warning(self, message: str) -> None:
        """
        Log a warning message.

        Args:
            message: The warning message to log
        """
        try:
            self.logger.warning(message)
        except Exception as e:
            print(f"[WARNING] {datetime.now().strftime(DATE_FORMAT)} - {message}", file=sys.stderr)
            print(f"[ERROR] Logging failed: {e}", file=sys.stderr)

    def log_success(self, message: str) -> None:
        """
        Log a success message (INFO level with SUCCESS prefix).

        Args:
            message: The success message to log
        """
        try:
            self.logger.info(f"SUCCESS: {message}")
        except Exception as e:
            print(f"[SUCCESS] {datetime.now().strftime(DATE_FORMAT)} - {message}", file=sys.stderr)
            print(f"[ERROR] Logging failed: {e}", file=sys.stderr)


# Global logger instance
_logger_instance: Optional[ToolkitLogger] = None


def verbosity_to_level(verbosity: int) -> int:
    """Map the CLI -v/-q counter to a console logging level."""
    if verbosity <= -1:
        return logging.ERROR
    if verbosity == 0:
        return logging.WARNING
    if verbosity == 1:
        return logging.INFO
    return logging.DEBUG


def setup_logger(log_file_path: Optional[str] = None, max_bytes: int = 10485760,
                 backup_count: int = 5, console_level: int = logging.WARNING) -> ToolkitLogger:
    """
    Set up and return the global logger instance.

    Args:
        log_file_path: Path to the log file, or None for console only
        max_bytes: Maximum size of log file before rotation (default: 10MB)
        backup_count: Number of backup files to keep (default: 5)
        console_level: Minimum level written to stderr

    Returns:
        ToolkitLogger instance
    """
    global _logger_instance
    _logger_instance = ToolkitLogger(log_file_path, max_bytes, backup_count, console_level)
    return _logger_instance


def get_logger() -> ToolkitLogger:
    """
    Get the global logger instance. Creates a console-only one if it doesn't exist.

    Returns:
        ToolkitLogger instance
    """
    global _logger_instance
    if _logger_instance is None:
        _logger_instance = ToolkitLogger()
    return _logger_instance


def log_debug(message: str) -> None:
    """Log a debug message using the global logger."""
    get_logger().log_debug(message)


def log_info(message: str) -> None:
    """Log an informational message using the global logger."""
    get_logger().log_info(message)


def log_error(message: str, exception: Optional[Exception] = None) -> None:
    """Log an error message using the global logger."""
    get_logger().log_error(message, exception)


def log_warning(message: str) -> None:
    """Log a warning message using the global logger."""
    get_logger().log_warning(message)


def log_success(message: str) -> None:
    """Log a success message using the global logger."""
    get_logger().log_success(message)
