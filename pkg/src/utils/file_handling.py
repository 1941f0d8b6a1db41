"""
File handling utilities for QuenchLab.
Manages output directories, JSON/CSV emission and binary grid files.
"""

import csv
import json
import logging
import struct
from datetime import datetime
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

GRID_MAGIC = b"QLGRID01"
GRID_HEADER = struct.Struct("<8sQ")


class FileHandler:
    """Handles file operations and path management"""

    @staticmethod
    def setup_output_directory(base_name, parent_dir=None, include_timestamp=False):
        """
        Create and return output directory path.

        Args:
            base_name (str): Base name for the directory
            parent_dir (str, optional): Parent directory path. Defaults to None.
            include_timestamp (bool, optional): Include timestamp in directory
                name. Defaults to False so reruns overwrite the same files.

        Returns:
            Path: Created directory path
        """
        base_name = FileHandler.safe_file_name(base_name)
        timestamp = datetime.now().strftime("%Y%m%d_%H%M%S") if include_timestamp else ""
        dir_name = f"{base_name}_{timestamp}" if timestamp else base_name

        if parent_dir:
            output_dir = Path(parent_dir) / dir_name
        else:
            output_dir = Path(dir_name)

        output_dir.mkdir(parents=True, exist_ok=True)
        return output_dir

    @staticmethod
    def ensure_directory(directory):
        """
        Ensure directory exists, create if it doesn't.

        Args:
            directory (str or Path): Directory path

        Returns:
            Path: Directory path
        """
        path = Path(directory)
        path.mkdir(parents=True, exist_ok=True)
        return path

    @staticmethod
    def get_base_name(file_path):
        """Extract base name from file path without extension"""
        return Path(file_path).stem

    @staticmethod
    def save_json(data, file_path, indent=2):
        """
        Save data to JSON file with sorted keys.

        Args:
            data (dict): Data to save
            file_path (str or Path): Output file path
            indent (int, optional): JSON indentation. Defaults to 2.
        """
        with open(file_path, 'w', encoding='utf-8') as f:
            json.dump(data, f, indent=indent, sort_keys=True, allow_nan=False)
            f.write("\n")

    @staticmethod
    def load_json(file_path):
        """Load data from JSON file"""
        with open(file_path, 'r', encoding='utf-8') as f:
            return json.load(f)

    @staticmethod
    def save_csv(header: Sequence[str], rows: Iterable[Sequence[object]], file_path):
        """
        Write a header plus rows; floats use repr so values read back exactly.

        Args:
            header (list): Column names
            rows (iterable): Row tuples
            file_path (str or Path): Output file path
        """
        def cell(value):
            if isinstance(value, float):
                return repr(value)
            return "" if value is None else value

        with open(file_path, 'w', encoding='utf-8', newline='') as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([cell(value) for value in row])

    @staticmethod
    def load_csv(file_path):
        """Read a CSV file written by save_csv into a list of dicts"""
        with open(file_path, 'r', encoding='utf-8', newline='') as f:
            return list(csv.DictReader(f))

    @staticmethod
    def safe_file_name(name):
        """
        Convert string to safe file name.

        Args:
            name (str): Original name

        Returns:
            str: Safe file name
        """
        unsafe_chars = '<>:"/\\|?* '
        safe_name = ''.join(c if c not in unsafe_chars else '_' for c in str(name))
        return safe_name.strip()

    @staticmethod
    def write_grid_file(values, file_path):
        """
        Write nodal values as a flat binary grid file: 8-byte magic,
        little-endian uint64 node count, then float64 values.
        """
        values = np.ascontiguousarray(values, dtype='<f8')
        with open(file_path, 'wb') as f:
            f.write(GRID_HEADER.pack(GRID_MAGIC, values.size))
            f.write(values.tobytes())

    @staticmethod
    def read_grid_file(file_path):
        """
        Read a grid file written by write_grid_file.

        Raises:
            ValueError: Bad magic, or a payload that does not match the count
        """
        data = Path(file_path).read_bytes()
        if len(data) < GRID_HEADER.size:
            raise ValueError(f"{file_path}: truncated grid file header")
        magic, count = GRID_HEADER.unpack_from(data)
        if magic != GRID_MAGIC:
            raise ValueError(f"{file_path}: not a grid file (magic {magic!r})")
        payload = data[GRID_HEADER.size:]
        if len(payload) != 8 * count:
            raise ValueError(f"{file_path}: header announces {count} values, found {len(payload) // 8}")
        logging.debug(f"Read {count} grid values from {file_path}")
        return np.frombuffer(payload, dtype='<f8').astype(float)
