from __future__ import annotations

import logging
from pathlib import Path

import pyarrow as pa
import pyarrow.csv as pacsv
import pyarrow.parquet as pq

FIELD_TYPE_TO_PYARROW = {
    "BOOLEAN": pa.bool_(),
    "STRING": pa.string(),
    "INTEGER": pa.int64(),
    "NUMBER": pa.float64(),
}

EXTENSION_MAPPING = {
    "snappy": ".snappy",
    "gzip": ".gz",
    "brotli": ".br",
    "zstd": ".zstd",
    "lz4": ".lz4",
}

logger = logging.getLogger(__name__)


def _field_type_to_pyarrow_field(field_name: str, input_types: dict, required_fields: list[str]) -> pa.Field:
    types = input_types.get("type", [])
    types = [types] if isinstance(types, str) else list(types)
    types_uppercase = [item.upper() for item in types]
    nullable = "NULL" in types_uppercase or field_name not in required_fields
    if "NULL" in types_uppercase:
        types_uppercase.remove("NULL")
    input_type = next(iter(types_uppercase)) if types_uppercase else ""
    pyarrow_type = FIELD_TYPE_TO_PYARROW.get(input_type, pa.string())
    return pa.field(field_name, pyarrow_type, nullable)


def properties_to_pyarrow_schema(schema_dictionary: dict) -> pa.Schema:
    """Convert a JSON schema object to a pyarrow schema, keeping property order.

    E.g:
     dictionary = {
        'properties': {
             'tick': {'type': ['integer']},
             'rss_db': {'type': ['number']},
             'action': {'type': ['string']},
           },
        'required': ['tick', 'rss_db', 'action'],
        }
    becomes:
        pa.schema([
             pa.field('tick', pa.int64(), False),
             pa.field('rss_db', pa.float64(), False),
             pa.field('action', pa.string(), False),
        ])
    """
    properties = schema_dictionary.get("properties", {})
    required_fields = schema_dictionary.get("required", [])
    return pa.schema(
        [
            _field_type_to_pyarrow_field(field_name, field_input_types, required_fields=required_fields)
            for field_name, field_input_types in properties.items()
        ]
    )


def create_pyarrow_table(list_dict: list[dict], schema: pa.Schema) -> pa.Table:
    """Create a pyarrow Table from a python list of dict."""
    data = {f: [row.get(f) for row in list_dict] for f in schema.names}
    return pa.table(data).cast(schema)


def concat_tables(records: list[dict], pyarrow_table: pa.Table | None, pyarrow_schema: pa.Schema) -> pa.Table | None:
    """Create a table from records and concatenate with the existing one."""
    if not records:
        return pyarrow_table
    new_table = create_pyarrow_table(records, pyarrow_schema)
    return pa.concat_tables([pyarrow_table, new_table]) if pyarrow_table is not None else new_table


def write_csv_file(table: pa.Table, path: str | Path) -> None:
    """Write a table as UTF-8 CSV with a header row and LF line endings."""
    pacsv.write_csv(
        table,
        str(path),
        write_options=pacsv.WriteOptions(include_header=True, quoting_style="needed"),
    )
    logger.info(f"Wrote {table.num_rows} rows to {path}")


def read_csv_file(path: str | Path, column_types: dict[str, pa.DataType]) -> pa.Table:
    """Read a CSV whose header must list exactly the given columns, in order.

    Raises:
        ValueError: the header differs from the expected columns.
        pyarrow.ArrowInvalid: the body does not parse or convert.
    """
    table = pacsv.read_csv(
        str(path),
        convert_options=pacsv.ConvertOptions(column_types=column_types, strings_can_be_null=False),
    )
    expected = list(column_types)
    if table.column_names != expected:
        raise ValueError(f"expected header {','.join(expected)}, got {','.join(table.column_names)}")
    return table


def parquet_file_name(stem: str, compression_method: str = "gzip") -> str:
    """File name for a parquet output, tagged with its compression, e.g. ``run_metrics.gz.parquet``."""
    return f"{stem}{EXTENSION_MAPPING[compression_method.lower()]}.parquet"


def write_parquet_file(table: pa.Table, path: str | Path, compression_method: str = "gzip") -> None:
    """Write a pyarrow table to a single parquet file."""
    if compression_method.lower() not in EXTENSION_MAPPING:
        raise ValueError(f"Unsupported compression method: {compression_method}")
    pq.write_table(table, str(path), compression=compression_method.lower())
    logger.info(f"Wrote {table.num_rows} rows to {path} ({compression_method})")
