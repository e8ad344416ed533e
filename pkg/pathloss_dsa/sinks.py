"""Metrics sink: batches per-tick rows into a pyarrow table and writes run outputs."""

from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np
import pyarrow as pa
from singer_sdk import typing as th

from pathloss_dsa.utils.tables import (
    concat_tables,
    parquet_file_name,
    properties_to_pyarrow_schema,
    write_csv_file,
    write_parquet_file,
)

logger = logging.getLogger(__name__)

METRICS_PROPERTIES = th.PropertiesList(
    th.Property("tick", th.IntegerType, required=True, description="Tick index"),
    th.Property("time_s", th.NumberType, required=True, description="Tick start time, seconds"),
    th.Property("band_hz", th.NumberType, required=True, description="Carrier in effect during the tick"),
    th.Property("tx_gain_db", th.NumberType, required=True, description="TX RF chain gain during the tick"),
    th.Property("rss_db", th.NumberType, required=True, description="Measured per-tone RSS"),
    th.Property("ber", th.NumberType, required=True),
    th.Property("bler", th.NumberType, required=True),
    th.Property("beta_db", th.NumberType, required=True, description="Environment term beta(t)"),
    th.Property("obstruction_db", th.NumberType, required=True, description="Active obstruction loss"),
    th.Property("action", th.StringType, required=True, description="Forced events and controller decision"),
    th.Property("status", th.StringType, required=True, description="Active or Failed"),
).to_dict()

METRICS_SCHEMA = properties_to_pyarrow_schema(METRICS_PROPERTIES)


class SummaryEncoder(json.JSONEncoder):
    """JSON encoder for numpy scalars found in run summaries."""

    def default(self, obj):
        if isinstance(obj, np.integer):
            return int(obj)
        if isinstance(obj, np.floating):
            return float(obj)
        return super().default(obj)


class MetricsSink:
    """Collects metrics rows and concatenates them into one table batch by batch."""

    def __init__(self, schema: pa.Schema = METRICS_SCHEMA, max_batch_size: int = 10000):
        self.schema = schema
        self.max_size = max_batch_size
        self.records: list[dict] = []
        self.table: pa.Table | None = None

    @property
    def is_full(self) -> bool:
        return len(self.records) >= self.max_size

    def process_record(self, record: dict) -> None:
        self.records.append(record)
        if self.is_full:
            self.process_batch()

    def process_batch(self) -> None:
        if not self.records:
            return
        logger.debug(f"Processing batch of {len(self.records)} metrics rows.")
        self.table = concat_tables(self.records, self.table, self.schema)
        self.records = []

    def clean_up(self) -> pa.Table:
        """Flush pending rows and return the complete table."""
        self.process_batch()
        table = self.table if self.table is not None else self.schema.empty_table()
        logger.info(f"Metrics table size: {table.nbytes} bytes | ({table.num_rows} rows)")
        return table


def write_metrics(
    table: pa.Table, prefix: str | Path, *, parquet: bool = False, compression_method: str = "gzip"
) -> list[Path]:
    """Write ``<prefix>_metrics.csv`` and, optionally, a compressed parquet copy."""
    prefix = Path(prefix)
    csv_path = prefix.with_name(f"{prefix.name}_metrics.csv")
    write_csv_file(table, csv_path)
    outputs = [csv_path]
    if parquet:
        parquet_path = prefix.with_name(parquet_file_name(f"{prefix.name}_metrics", compression_method))
        write_parquet_file(table, parquet_path, compression_method=compression_method)
        outputs.append(parquet_path)
    return outputs


def write_events_log(actions: list[tuple[int, str, str]], prefix: str | Path) -> Path:
    """One line per non-Hold action: ``tick=<t> action=<name> reason=<text>``."""
    prefix = Path(prefix)
    path = prefix.with_name(f"{prefix.name}_events.log")
    with path.open("w", encoding="utf-8", newline="\n") as handle:
        for tick, action, reason in actions:
            handle.write(f"tick={tick} action={action} reason={reason}\n")
    logger.info(f"Wrote {len(actions)} events to {path}")
    return path


def write_summary(summary: dict, prefix: str | Path) -> Path:
    prefix = Path(prefix)
    path = prefix.with_name(f"{prefix.name}_summary.txt")
    with path.open("w", encoding="utf-8", newline="\n") as handle:
        handle.write(json.dumps(summary, cls=SummaryEncoder, indent=2, sort_keys=True))
        handle.write("\n")
    return path
