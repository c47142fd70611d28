"""Perceptually uniform HDR encoding toolkit.

Transfer functions (PU21, PQ, sRGB), HDR file I/O, effective dynamic range,
RAW capture simulation, dataset preparation, pairwise JOD scaling, and a
small flow-matching / LoRA laboratory.
"""
from .errors import ContractError, DomainError, ParseError, PuhdrError, UnsupportedFormatError
from .imgcore import LinearImage, luminance, rescale_to_peak
from .xfer import (EncodedImage, Pu21Params, TransferTag, decode_image, encode_image,
                   pq_decode, pq_encode, pu21_decode, pu21_encode, srgb_decode, srgb_encode)

__version__ = "0.1.0"
