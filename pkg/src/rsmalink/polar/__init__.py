"""CRC-aided polar codec: GA construction, shortening, encoding, SCL decoding."""

from .code import PolarCode, decode_paths, decode_scl, encode, encode_batch, mother_length, polar_transform
from .construction import construct_ga, design_snr_for_capacity, ga_bit_channel_means, shortened_positions
from .crc import CRC11_POLY, NO_CRC, Crc
from .decoding import box_plus, scl_decode

__all__ = [
    "CRC11_POLY",
    "Crc",
    "NO_CRC",
    "PolarCode",
    "box_plus",
    "construct_ga",
    "decode_paths",
    "decode_scl",
    "design_snr_for_capacity",
    "encode",
    "encode_batch",
    "ga_bit_channel_means",
    "mother_length",
    "polar_transform",
    "scl_decode",
    "shortened_positions",
]
