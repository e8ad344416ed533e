"""Test suite for target-parquet."""
