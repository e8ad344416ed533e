import numpy as np
import pytest

from pathloss_dsa.utils import db_to_linear, format_frequency, linear_to_db, parse_frequency


@pytest.mark.parametrize(
    ("text", "expected"),
    [
        pytest.param("830MHz", 830e6, id="mhz"),
        pytest.param("1.9GHz", 1.9e9, id="ghz"),
        pytest.param("1.2 ghz", 1.2e9, id="lowercase_with_space"),
        pytest.param("2400kHz", 2.4e6, id="khz"),
        pytest.param("1.6e9", 1.6e9, id="plain_scientific"),
        pytest.param("50Hz", 50.0, id="hz"),
        pytest.param(" 900 MHz ", 900e6, id="padded"),
    ],
)
def test_parse_frequency(text, expected):
    assert parse_frequency(text) == pytest.approx(expected, rel=1e-15)


@pytest.mark.parametrize(
    "text",
    [
        pytest.param("", id="empty"),
        pytest.param("fast", id="no_number"),
        pytest.param("1.9THz", id="unknown_unit"),
        pytest.param("0MHz", id="zero"),
        pytest.param("-830MHz", id="negative"),
    ],
)
def test_parse_frequency_errors(text):
    with pytest.raises(ValueError):
        parse_frequency(text)


@pytest.mark.parametrize(
    ("hertz", "expected"),
    [
        pytest.param(830e6, "830MHz", id="mhz"),
        pytest.param(1.9e9, "1.9GHz", id="ghz"),
        pytest.param(2.4e3, "2.4kHz", id="khz"),
        pytest.param(50.0, "50Hz", id="hz"),
    ],
)
def test_format_frequency(hertz, expected):
    assert format_frequency(hertz) == expected
    assert parse_frequency(expected) == pytest.approx(hertz)


def test_db_conversions():
    assert db_to_linear(-90.0) == pytest.approx(1e-9)
    assert linear_to_db(1e-9) == pytest.approx(-90.0)
    values = np.array([-30.0, 0.0, 13.0])
    assert np.allclose(linear_to_db(db_to_linear(values)), values)
