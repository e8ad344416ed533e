"""Baseband PHY chain: random bits, Gray 16-QAM, CP-OFDM framing and link-quality metrics."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pyarrow as pa
from scipy import fft, signal, special
from singer_sdk import typing as th

from pathloss_dsa.exceptions import DomainError
from pathloss_dsa.propagation import Frequency, as_frequency
from pathloss_dsa.utils import db_to_linear
from pathloss_dsa.utils.tables import create_pyarrow_table, properties_to_pyarrow_schema, read_csv_file, write_csv_file

logger = logging.getLogger(__name__)

BITS_PER_QAM16_SYMBOL = 4
_DEMOD_CHUNK = 1 << 16

# Gray-coded amplitude per axis, keyed by the two bits (sign bit first) mapped to that axis.
_AXIS_LEVEL = {0b00: -3, 0b01: -1, 0b11: 1, 0b10: 3}

# Index i holds the point for the bit pattern of i written MSB first: (b0 b1) -> I, (b2 b3) -> Q.
QAM16_CONSTELLATION = np.array(
    [complex(_AXIS_LEVEL[i >> 2], _AXIS_LEVEL[i & 0b11]) for i in range(16)]
) / math.sqrt(10.0)
QAM16_BITS = ((np.arange(16)[:, None] >> np.array([3, 2, 1, 0])) & 1).astype(np.uint8)
_BIT_WEIGHTS = np.array([8, 4, 2, 1])

PSD_SCHEMA = properties_to_pyarrow_schema(
    th.PropertiesList(
        th.Property("freq_hz", th.NumberType, required=True, description="Absolute (passband) bin frequency, Hz"),
        th.Property("psd_db", th.NumberType, required=True, description="Bin power on the per-tone scale, dB"),
    ).to_dict()
)

BER_SCHEMA = properties_to_pyarrow_schema(
    th.PropertiesList(
        th.Property("esn0_db", th.NumberType, required=True, description="Symbol energy over noise density, dB"),
        th.Property("ber", th.NumberType, required=True, description="Monte-Carlo bit error rate"),
        th.Property("theory_ber", th.NumberType, required=True, description="Closed-form Gray 16-QAM bit error rate"),
    ).to_dict()
)


def _readonly(array: np.ndarray) -> np.ndarray:
    array = np.array(array, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class OfdmConfig:
    """CP-OFDM geometry. Defaults: 512-point FFT, 200 occupied tones, 128-sample cyclic prefix."""

    fft_size: int = 512
    occupied_tones: int = 200
    cp_len: int = 128
    sample_rate_hz: float = 10e6
    bits_per_symbol: int = field(default=BITS_PER_QAM16_SYMBOL, init=False)

    def __post_init__(self):
        if self.fft_size <= 0:
            raise DomainError(f"fft_size must be positive, got {self.fft_size}")
        if not 0 < self.occupied_tones < self.fft_size:
            raise DomainError(f"occupied_tones must be in (0, fft_size), got {self.occupied_tones}")
        if self.occupied_tones % 2:
            raise DomainError(f"occupied_tones must be even, got {self.occupied_tones}")
        if not 0 <= self.cp_len < self.fft_size:
            raise DomainError(f"cp_len must be in [0, fft_size), got {self.cp_len}")
        if not self.sample_rate_hz > 0:
            raise DomainError(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")

    @property
    def symbol_len(self) -> int:
        return self.fft_size + self.cp_len

    @property
    def symbol_duration_s(self) -> float:
        return self.symbol_len / self.sample_rate_hz

    @property
    def bits_per_ofdm_symbol(self) -> int:
        return self.occupied_tones * self.bits_per_symbol

    @property
    def tone_bins(self) -> np.ndarray:
        """FFT bins of the occupied tones, -half..-1 then +1..+half; DC stays empty."""
        half = self.occupied_tones // 2
        offsets = np.concatenate([np.arange(-half, 0), np.arange(1, half + 1)])
        return offsets % self.fft_size


@dataclass(frozen=True, eq=False)
class BitBlock:
    bits: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        bits = np.asarray(self.bits)
        if bits.size and not np.isin(bits, (0, 1)).all():
            raise DomainError("bits must be 0 or 1")
        object.__setattr__(self, "bits", _readonly(bits.astype(np.uint8).ravel()))

    def __len__(self) -> int:
        return int(self.bits.size)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BitBlock):
            return NotImplemented
        return np.array_equal(self.bits, other.bits)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class IqFrame:
    """Complex baseband samples at ``sample_rate_hz``."""

    samples: np.ndarray
    sample_rate_hz: float
    symbols_contained: int = 0

    def __post_init__(self):
        object.__setattr__(self, "samples", _readonly(np.asarray(self.samples, dtype=np.complex128).ravel()))
        if not self.sample_rate_hz > 0:
            raise DomainError(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")

    def __len__(self) -> int:
        return int(self.samples.size)

    def scaled(self, amplitude: float) -> IqFrame:
        return IqFrame(self.samples * amplitude, self.sample_rate_hz, self.symbols_contained)


@dataclass(frozen=True)
class LinkMetrics:
    rss_db: float
    ber: float
    bler: float
    snr_db: float

    def __post_init__(self):
        for name in ("ber", "bler"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise DomainError(f"{name} must be in [0, 1], got {value}")
        if self.bler < self.ber - 1e-12:
            raise DomainError(f"bler ({self.bler}) must not be below ber ({self.ber})")


@dataclass(frozen=True, eq=False)
class PowerSpectrum:
    """Welch PSD with absolute frequency labels; values are dB on the per-tone power scale."""

    frequencies_hz: np.ndarray
    psd_db: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "frequencies_hz", _readonly(self.frequencies_hz))
        object.__setattr__(self, "psd_db", _readonly(self.psd_db))


def generate_bits(count: int, seed: int) -> BitBlock:
    """Uniform random bits, reproducible for a given seed."""
    if count <= 0:
        raise DomainError(f"count must be positive, got {count}")
    rng = np.random.default_rng(seed)
    return BitBlock(rng.integers(0, 2, size=count, dtype=np.uint8), seed=seed)


def qam16_modulate(bits: BitBlock) -> np.ndarray:
    """Map groups of 4 bits onto the unit-energy Gray 16-QAM constellation."""
    if len(bits) % BITS_PER_QAM16_SYMBOL:
        raise DomainError(f"bit count must be a multiple of 4, got {len(bits)}")
    indices = bits.bits.reshape(-1, BITS_PER_QAM16_SYMBOL) @ _BIT_WEIGHTS
    return QAM16_CONSTELLATION[indices]


def qam16_demodulate(symbols: np.ndarray) -> BitBlock:
    """Hard minimum-distance decision.

    Equidistant points resolve to the lexicographically smallest bit pattern, which is the
    lowest constellation index.
    """
    symbols = np.asarray(symbols, dtype=np.complex128).ravel()
    indices = np.empty(symbols.size, dtype=np.intp)
    for start in range(0, symbols.size, _DEMOD_CHUNK):
        chunk = symbols[start : start + _DEMOD_CHUNK, None]
        distance = (chunk.real - QAM16_CONSTELLATION.real) ** 2 + (chunk.imag - QAM16_CONSTELLATION.imag) ** 2
        indices[start : start + chunk.shape[0]] = np.argmin(distance, axis=1)
    return BitBlock(QAM16_BITS[indices].ravel())


def ofdm_modulate(symbols: np.ndarray, cfg: OfdmConfig) -> IqFrame:
    """Load symbols onto the occupied tones, inverse FFT and prepend the cyclic prefix."""
    symbols = np.asarray(symbols, dtype=np.complex128).ravel()
    if symbols.size % cfg.occupied_tones:
        raise DomainError(f"symbol count {symbols.size} is not a multiple of {cfg.occupied_tones} occupied tones")
    n_symbols = symbols.size // cfg.occupied_tones
    grid = np.zeros((n_symbols, cfg.fft_size), dtype=np.complex128)
    grid[:, cfg.tone_bins] = symbols.reshape(n_symbols, cfg.occupied_tones)
    time = fft.ifft(grid, axis=1, norm="ortho")
    if cfg.cp_len:
        time = np.concatenate([time[:, -cfg.cp_len :], time], axis=1)
    return IqFrame(time.ravel(), cfg.sample_rate_hz, n_symbols)


def _tone_grid(frame: IqFrame, cfg: OfdmConfig) -> np.ndarray:
    if len(frame) % cfg.symbol_len:
        raise DomainError(f"frame length {len(frame)} is not a multiple of {cfg.symbol_len} samples")
    blocks = frame.samples.reshape(-1, cfg.symbol_len)[:, cfg.cp_len :]
    return fft.fft(blocks, axis=1, norm="ortho")[:, cfg.tone_bins]


def ofdm_demodulate(frame: IqFrame, cfg: OfdmConfig) -> np.ndarray:
    """Strip the cyclic prefix, forward FFT and read the occupied tones in modulation order."""
    return _tone_grid(frame, cfg).ravel()


def measure_rss(frame: IqFrame, cfg: OfdmConfig) -> float:
    """Mean per-occupied-tone power in dB; 0 dB is a unit-energy constellation at unit gain."""
    if len(frame) < cfg.symbol_len:
        raise DomainError("frame holds no complete OFDM symbol")
    power = float(np.mean(np.abs(_tone_grid(frame, cfg)) ** 2))
    return 10.0 * math.log10(power) if power > 0 else -math.inf


def estimate_snr_db(rss_db: float, noise_floor_db: float) -> float:
    """SNR implied by a total in-band power reading over a known noise floor."""
    excess = db_to_linear(rss_db) - db_to_linear(noise_floor_db)
    return 10.0 * math.log10(max(excess, np.finfo(float).tiny) / db_to_linear(noise_floor_db))


def compute_ber(tx: BitBlock, rx: BitBlock) -> float:
    if len(tx) != len(rx):
        raise DomainError(f"bit blocks differ in length ({len(tx)} vs {len(rx)})")
    if not len(tx):
        raise DomainError("cannot compute BER of empty blocks")
    return float(np.count_nonzero(tx.bits != rx.bits)) / len(tx)


def compute_bler(tx: BitBlock, rx: BitBlock, block_bits: int) -> float:
    """Fraction of ``block_bits``-sized blocks holding at least one bit error."""
    if block_bits <= 0:
        raise DomainError(f"block_bits must be positive, got {block_bits}")
    if len(tx) != len(rx):
        raise DomainError(f"bit blocks differ in length ({len(tx)} vs {len(rx)})")
    if not len(tx) or len(tx) % block_bits:
        raise DomainError(f"bit count {len(tx)} is not a positive multiple of block size {block_bits}")
    errors = (tx.bits != rx.bits).reshape(-1, block_bits)
    return float(np.mean(errors.any(axis=1)))


def link_metrics(
    tx: BitBlock, rx: BitBlock, frame: IqFrame, cfg: OfdmConfig, noise_floor_db: float, block_bits: int
) -> LinkMetrics:
    rss_db = measure_rss(frame, cfg)
    return LinkMetrics(
        rss_db=rss_db,
        ber=compute_ber(tx, rx),
        bler=compute_bler(tx, rx, block_bits),
        snr_db=estimate_snr_db(rss_db, noise_floor_db),
    )


def complex_awgn(size: int, power: float, rng: np.random.Generator) -> np.ndarray:
    """Circularly-symmetric white Gaussian noise of the given mean power per sample."""
    scale = math.sqrt(power / 2.0)
    return scale * (rng.standard_normal(size) + 1j * rng.standard_normal(size))


def add_awgn(frame: IqFrame, esn0_db: float, rng: np.random.Generator) -> IqFrame:
    """Add noise with per-tone power N0 relative to a unit-energy constellation."""
    noise = complex_awgn(len(frame), db_to_linear(-esn0_db), rng)
    return IqFrame(frame.samples + noise, frame.sample_rate_hz, frame.symbols_contained)


def theoretical_ber_qam16(esn0_db: float | np.ndarray) -> float | np.ndarray:
    """Exact bit error rate of Gray-coded square 16-QAM over AWGN."""
    d = np.sqrt(db_to_linear(np.asarray(esn0_db, dtype=float)) / 5.0)

    def q(x: np.ndarray) -> np.ndarray:
        return 0.5 * special.erfc(x / np.sqrt(2.0))

    ber = 0.25 * (3.0 * q(d) + 2.0 * q(3.0 * d) - q(5.0 * d))
    return float(ber) if np.ndim(ber) == 0 else ber


def monte_carlo_ber(esn0_db: float, bit_count: int, seed: int | list[int], cfg: OfdmConfig | None = None) -> float:
    """BER of the full OFDM chain over AWGN; ``bit_count`` is rounded up to whole OFDM symbols."""
    cfg = cfg or OfdmConfig()
    symbols = math.ceil(bit_count / cfg.bits_per_ofdm_symbol)
    bits_seq, noise_seq = np.random.SeedSequence(seed).spawn(2)
    tx = generate_bits(symbols * cfg.bits_per_ofdm_symbol, seed=int(bits_seq.generate_state(1)[0]))
    frame = add_awgn(ofdm_modulate(qam16_modulate(tx), cfg), esn0_db, np.random.default_rng(noise_seq))
    return compute_ber(tx, qam16_demodulate(ofdm_demodulate(frame, cfg)))


def ber_curve(esn0_list: list[float], bits_per_point: int, seed: int, cfg: OfdmConfig | None = None) -> pa.Table:
    """Monte-Carlo and closed-form BER per Es/N0; each point draws from its own seeded stream."""
    if not esn0_list:
        raise DomainError("Es/N0 list must not be empty")
    rows = []
    for index, esn0_db in enumerate(esn0_list):
        ber = monte_carlo_ber(esn0_db, bits_per_point, seed=[seed, index], cfg=cfg)
        rows.append({"esn0_db": float(esn0_db), "ber": ber, "theory_ber": theoretical_ber_qam16(esn0_db)})
        logger.info(f"Es/N0 {esn0_db:g} dB: ber={ber:.4g}")
    return create_pyarrow_table(rows, BER_SCHEMA)


def spectrum(frame: IqFrame, nfft: int, center_freq: Frequency | float) -> PowerSpectrum:
    """Welch PSD (Hann window, 50% overlap) labelled with passband frequencies.

    Bin values are scaled so that white noise of per-sample power P reads P in every bin
    and, for ``nfft == fft_size``, an occupied tone reads its own power. The mean of the
    linear bins equals the mean time-domain power.
    """
    center = as_frequency(center_freq)
    if nfft <= 0:
        raise DomainError(f"nfft must be positive, got {nfft}")
    if len(frame) < nfft:
        raise DomainError(f"frame of {len(frame)} samples is shorter than nfft={nfft}")
    freqs, density = signal.welch(
        frame.samples,
        fs=frame.sample_rate_hz,
        window="hann",
        nperseg=nfft,
        noverlap=nfft // 2,
        detrend=False,
        return_onesided=False,
        scaling="density",
    )
    freqs = fft.fftshift(freqs)
    power = fft.fftshift(density) * frame.sample_rate_hz
    psd_db = 10.0 * np.log10(np.maximum(power, np.finfo(float).tiny))
    return PowerSpectrum(frequencies_hz=center.hertz + freqs, psd_db=psd_db)


def spectrum_to_table(psd: PowerSpectrum) -> pa.Table:
    rows = [{"freq_hz": float(hz), "psd_db": float(db)} for hz, db in zip(psd.frequencies_hz, psd.psd_db)]
    return create_pyarrow_table(rows, PSD_SCHEMA)


def write_psd_csv(psd: PowerSpectrum, path: str | Path) -> None:
    write_csv_file(spectrum_to_table(psd), path)


def read_psd_csv(path: str | Path) -> PowerSpectrum:
    table = read_csv_file(path, {"freq_hz": pa.float64(), "psd_db": pa.float64()})
    return PowerSpectrum(
        frequencies_hz=table.column("freq_hz").to_numpy(),
        psd_db=table.column("psd_db").to_numpy(),
    )


def read_ber_csv(path: str | Path) -> pa.Table:
    return read_csv_file(path, {field.name: field.type for field in BER_SCHEMA})
