"""
Utils package
"""
from app.utils.files import (
    run_directory,
    format_float,
    write_text,
    write_json,
    write_csv,
    read_json,
    read_csv,
)


__all__ = [
    "run_directory",
    "format_float",
    "write_text",
    "write_json",
    "write_csv",
    "read_json",
    "read_csv",
]
