"""LoRaWAN 1.0 data frame parsing, MIC check and FRMPayload decryption.

Multi-byte header fields are little-endian on the wire. ``dev_addr`` is kept
in wire order; :attr:`PhyFrame.dev_addr_hex` gives the usual big-endian form.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, replace
from enum import IntEnum
from typing import Optional, Union

from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes
from cryptography.hazmat.primitives.cmac import CMAC

log = logging.getLogger(__name__)

# Semtech default session key shared by "generic" ABP devices
GENERIC_KEY = bytes.fromhex("2B7E151628AED2A6ABF7158809CF4F3C")

MIN_FRAME_LEN = 12  # MHDR + FHDR(7) + MIC(4)


class MType(IntEnum):
    JOIN_REQUEST = 0
    JOIN_ACCEPT = 1
    UNCONFIRMED_UP = 2
    UNCONFIRMED_DOWN = 3
    CONFIRMED_UP = 4
    CONFIRMED_DOWN = 5
    RFU = 6
    PROPRIETARY = 7


DATA_TYPES = {MType.UNCONFIRMED_UP, MType.UNCONFIRMED_DOWN, MType.CONFIRMED_UP, MType.CONFIRMED_DOWN}
UPLINK_TYPES = {MType.UNCONFIRMED_UP, MType.CONFIRMED_UP}


class FrameError(ValueError):
    pass


class TruncatedFrame(FrameError):
    pass


class MalformedFrame(FrameError):
    pass


class NoPayload(FrameError):
    pass


@dataclass(frozen=True)
class PhyFrame:
    mhdr: int
    dev_addr: bytes
    fctrl: int
    fcnt: int
    fopts: bytes = b""
    fport: Optional[int] = None
    frm_payload: bytes = b""
    mic: bytes = b"\x00\x00\x00\x00"

    def __post_init__(self):
        if len(self.dev_addr) != 4:
            raise MalformedFrame("dev_addr must be 4 bytes")
        if len(self.mic) != 4:
            raise MalformedFrame("mic must be 4 bytes")
        if len(self.fopts) != self.fctrl & 0x0F:
            raise MalformedFrame("FOpts length does not match FCtrl")
        if self.fport is None and self.frm_payload:
            raise MalformedFrame("FRMPayload without FPort")
        if not 0 <= self.fcnt <= 0xFFFF:
            raise MalformedFrame("fcnt must fit in 16 bits")

    @property
    def mtype(self) -> MType:
        return MType(self.mhdr >> 5)

    @property
    def major(self) -> int:
        return self.mhdr & 0x03

    @property
    def direction(self) -> int:
        return 0 if self.mtype in UPLINK_TYPES else 1

    @property
    def dev_addr_hex(self) -> str:
        return self.dev_addr[::-1].hex().upper()

    @property
    def adr(self) -> bool:
        return bool(self.fctrl & 0x80)

    @property
    def ack(self) -> bool:
        return bool(self.fctrl & 0x20)

    def mac_payload(self) -> bytes:
        out = self.dev_addr + bytes([self.fctrl]) + struct.pack("<H", self.fcnt) + self.fopts
        if self.fport is not None:
            out += bytes([self.fport]) + self.frm_payload
        return out

    def signed_part(self) -> bytes:
        return bytes([self.mhdr]) + self.mac_payload()

    def serialize(self) -> bytes:
        return self.signed_part() + self.mic


@dataclass(frozen=True)
class OpaqueFrame:
    """Join or proprietary message, kept as raw body."""

    mhdr: int
    body: bytes
    mic: bytes

    @property
    def mtype(self) -> MType:
        return MType(self.mhdr >> 5)

    def serialize(self) -> bytes:
        return bytes([self.mhdr]) + self.body + self.mic


def parse_phy_payload(raw: bytes) -> Union[PhyFrame, OpaqueFrame]:
    raw = bytes(raw)
    if len(raw) < MIN_FRAME_LEN:
        raise TruncatedFrame(f"frame of {len(raw)} bytes is shorter than {MIN_FRAME_LEN}")
    mhdr = raw[0]
    if mhdr & 0x03 != 0:
        log.warning("MHDR major version %d is not LoRaWAN R1", mhdr & 0x03)
    if MType(mhdr >> 5) not in DATA_TYPES:
        return OpaqueFrame(mhdr=mhdr, body=raw[1:-4], mic=raw[-4:])

    mac = raw[1:-4]
    fctrl = mac[4]
    fopts_len = fctrl & 0x0F
    if 7 + fopts_len > len(mac):
        raise MalformedFrame(
            f"FOpts length {fopts_len} exceeds the {len(mac) - 7} bytes after FHDR"
        )
    fopts = mac[7 : 7 + fopts_len]
    rest = mac[7 + fopts_len :]
    fport = rest[0] if rest else None
    return PhyFrame(
        mhdr=mhdr,
        dev_addr=mac[0:4],
        fctrl=fctrl,
        fcnt=struct.unpack_from("<H", mac, 5)[0],
        fopts=fopts,
        fport=fport,
        frm_payload=rest[1:],
        mic=raw[-4:],
    )


def _aes_ecb(key: bytes, block: bytes) -> bytes:
    enc = Cipher(algorithms.AES(key), modes.ECB()).encryptor()
    return enc.update(block) + enc.finalize()


def _block(tag: int, direction: int, dev_addr: bytes, fcnt: int, last: int) -> bytes:
    # fcnt is sent as 16 bits; the upper half of the 32-bit counter is zero
    return bytes([tag, 0, 0, 0, 0, direction]) + dev_addr + struct.pack("<IBB", fcnt, 0, last)


def compute_mic(frame: PhyFrame, nwk_s_key: bytes) -> bytes:
    msg = frame.signed_part()
    b0 = _block(0x49, frame.direction, frame.dev_addr, frame.fcnt, len(msg))
    c = CMAC(algorithms.AES(nwk_s_key))
    c.update(b0 + msg)
    return c.finalize()[:4]


def verify_mic(frame: PhyFrame, nwk_s_key: bytes) -> bool:
    return compute_mic(frame, nwk_s_key) == frame.mic


def keystream(key: bytes, direction: int, dev_addr: bytes, fcnt: int, length: int) -> bytes:
    out = bytearray()
    i = 1
    while len(out) < length:
        out += _aes_ecb(key, _block(0x01, direction, dev_addr, fcnt, i))
        i += 1
    return bytes(out[:length])


def crypt_payload(data: bytes, key: bytes, direction: int, dev_addr: bytes, fcnt: int) -> bytes:
    """XOR ``data`` with the FRMPayload keystream; encrypts and decrypts."""
    ks = keystream(key, direction, dev_addr, fcnt, len(data))
    return bytes(a ^ b for a, b in zip(data, ks))


def decrypt_frm_payload(frame: PhyFrame, app_s_key: bytes) -> bytes:
    """Plaintext of the frame's FRMPayload.

    Port 0 payloads are MAC commands and are encrypted with NwkSKey in
    LoRaWAN; pass that key here for them.
    """
    if frame.fport is None:
        raise NoPayload("frame carries no FPort / FRMPayload")
    return crypt_payload(frame.frm_payload, app_s_key, frame.direction, frame.dev_addr, frame.fcnt)


def build_data_frame(
    dev_addr: bytes,
    fcnt: int,
    plaintext: bytes = b"",
    fport: Optional[int] = 1,
    *,
    mtype: MType = MType.UNCONFIRMED_UP,
    fctrl: int = 0,
    fopts: bytes = b"",
    nwk_s_key: bytes = GENERIC_KEY,
    app_s_key: bytes = GENERIC_KEY,
) -> PhyFrame:
    """Encrypt and sign a data frame; ``dev_addr`` is in wire order."""
    fctrl = (fctrl & 0xF0) | len(fopts)
    direction = 0 if mtype in UPLINK_TYPES else 1
    key = nwk_s_key if fport == 0 else app_s_key
    frm = crypt_payload(plaintext, key, direction, dev_addr, fcnt) if fport is not None else b""
    unsigned = PhyFrame(
        mhdr=int(mtype) << 5, dev_addr=dev_addr, fctrl=fctrl, fcnt=fcnt,
        fopts=fopts, fport=fport, frm_payload=frm,
    )
    return replace(unsigned, mic=compute_mic(unsigned, nwk_s_key))


def decode_generic(raw: bytes, key: bytes = GENERIC_KEY, app_key: Optional[bytes] = None):
    """Parse, check and decrypt a frame under the generic (or given) key.

    ``key`` is the NwkSKey; ``app_key`` defaults to it, as with generic ABP
    devices. Never refuses on a bad MIC; the flag is returned instead.
    Non-data frames come back as :class:`OpaqueFrame` with ``None`` plaintext
    and MIC flag.
    """
    frame = parse_phy_payload(raw)
    if isinstance(frame, OpaqueFrame):
        return frame, None, None
    mic_ok = verify_mic(frame, key)
    payload_key = key if frame.fport == 0 or app_key is None else app_key
    plaintext = decrypt_frm_payload(frame, payload_key) if frame.fport is not None else b""
    return frame, plaintext, mic_ok
