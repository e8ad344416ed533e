import pandas as pd
import pyarrow as pa
import pyarrow.parquet as pq
import pytest
from singer_sdk import typing as th

from pathloss_dsa.utils.tables import (
    EXTENSION_MAPPING,
    _field_type_to_pyarrow_field,
    concat_tables,
    create_pyarrow_table,
    parquet_file_name,
    properties_to_pyarrow_schema,
    read_csv_file,
    write_csv_file,
    write_parquet_file,
)


@pytest.fixture()
def sample_data():
    return [
        {"tick": 0, "band_hz": 1.9e9, "action": "Hold"},
        {"tick": 1, "band_hz": 1.9e9, "action": "Downshift"},
        {"tick": 2, "band_hz": 1.6e9, "action": "Hold"},
    ]


@pytest.fixture()
def sample_schema():
    return pa.schema(
        [
            ("tick", pa.int64()),
            ("band_hz", pa.float64()),
            ("action", pa.string()),
        ]
    )


def test_properties_to_pyarrow_schema():
    schema = th.PropertiesList(
        th.Property("tick", th.IntegerType, required=True),
        th.Property("rss_db", th.NumberType, required=True),
        th.Property("action", th.StringType),
        th.Property("failed", th.BooleanType),
    ).to_dict()

    expected_pyarrow_schema = pa.schema(
        [
            pa.field("tick", pa.int64(), False),
            pa.field("rss_db", pa.float64(), False),
            pa.field("action", pa.string(), True),
            pa.field("failed", pa.bool_(), True),
        ]
    )
    assert properties_to_pyarrow_schema(schema) == expected_pyarrow_schema


def test_properties_to_pyarrow_schema_keeps_order():
    schema = {
        "properties": {
            "z": {"type": ["number"]},
            "a": {"type": ["integer"]},
        },
        "required": ["z", "a"],
    }
    assert properties_to_pyarrow_schema(schema).names == ["z", "a"]


@pytest.mark.parametrize(
    "field_name, input_types, expected_result",
    [
        pytest.param(
            "example_field",
            {"type": "string"},
            pa.field("example_field", pa.string(), True),
            id="valid_input",
        ),
        pytest.param(
            "required_field",
            {"type": ["integer"]},
            pa.field("required_field", pa.int64(), False),
            id="required_input",
        ),
        pytest.param(
            "required_field",
            {"type": ["number", "null"]},
            pa.field("required_field", pa.float64(), True),
            id="nullable_required_input",
        ),
        pytest.param(
            "unknown_type",
            {"type": "unknown_type"},
            pa.field("unknown_type", pa.string(), True),
            id="unknown_type",
        ),
    ],
)
def test_field_type_to_pyarrow_field(field_name, input_types, expected_result):
    result = _field_type_to_pyarrow_field(field_name, input_types, ["required_field"])
    assert result == expected_result


def test_create_pyarrow_table(sample_schema):
    data = [
        {"tick": 0, "band_hz": 1.9e9, "action": "Hold"},
        {"tick": 1, "band_hz": 1.6e9},
        {"tick": 2, "action": "Hold"},
    ]
    expected_table = pd.DataFrame(data)
    result_table = create_pyarrow_table(data, sample_schema)

    assert result_table.schema.equals(sample_schema)
    assert len(result_table) == len(data)
    assert result_table.to_pandas().equals(expected_table)


def test_concat_tables(sample_data, sample_schema):
    initial_table = create_pyarrow_table(sample_data, sample_schema)

    result_table = concat_tables(sample_data, initial_table, sample_schema)

    expected_table = create_pyarrow_table(sample_data * 2, sample_schema)
    assert result_table.equals(expected_table)


def test_concat_tables_without_records_keeps_table(sample_data, sample_schema):
    initial_table = create_pyarrow_table(sample_data, sample_schema)

    assert concat_tables([], initial_table, sample_schema) is initial_table
    assert concat_tables([], None, sample_schema) is None


def test_csv_round_trip(tmp_path, sample_data, sample_schema):
    table = create_pyarrow_table(sample_data, sample_schema)
    path = tmp_path / "rows.csv"

    write_csv_file(table, path)

    assert list(pd.read_csv(path).columns) == ["tick", "band_hz", "action"]
    assert b"\r\n" not in path.read_bytes()
    read_back = read_csv_file(path, {field.name: field.type for field in sample_schema})
    assert read_back.equals(table)
    assert pd.read_csv(path).to_dict("records") == sample_data


def test_read_csv_file_rejects_other_header(tmp_path):
    path = tmp_path / "rows.csv"
    path.write_text("frequency,rss\n830000000,-43.09\n", encoding="utf-8")

    with pytest.raises(ValueError, match="expected header freq_hz,rss_dbm"):
        read_csv_file(path, {"freq_hz": pa.float64(), "rss_dbm": pa.float64()})


@pytest.mark.parametrize(
    "compression_method, expected",
    [
        pytest.param("gzip", "run_metrics.gz.parquet", id="gzip"),
        pytest.param("snappy", "run_metrics.snappy.parquet", id="snappy"),
        pytest.param("ZSTD", "run_metrics.zstd.parquet", id="upper_case"),
    ],
)
def test_parquet_file_name(compression_method, expected):
    assert parquet_file_name("run_metrics", compression_method) == expected


@pytest.mark.parametrize("compression_method", ["gzip", "snappy"])
def test_write_parquet_file(tmp_path, sample_data, sample_schema, compression_method):
    table = create_pyarrow_table(sample_data, sample_schema)
    path = tmp_path / f"metrics{EXTENSION_MAPPING[compression_method]}.parquet"

    write_parquet_file(table, path, compression_method=compression_method)

    assert path.exists()
    read_table = pq.read_table(str(path))
    assert read_table.to_pandas().equals(pd.DataFrame(sample_data))


def test_write_parquet_file_rejects_unknown_compression(tmp_path, sample_data, sample_schema):
    table = create_pyarrow_table(sample_data, sample_schema)

    with pytest.raises(ValueError, match="Unsupported compression method"):
        write_parquet_file(table, tmp_path / "metrics.parquet", compression_method="lzma")
