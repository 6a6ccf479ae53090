#!/usr/bin/env python3
"""Print a sha256 checksum per frame of an uncompressed (BI_RGB) AVI file.

Standalone on purpose: this parses the RIFF container and bitmap rows
directly, without the package's decoders or any codec library, so its
output can serve as an independent reference for frame-extraction tests.

Usage: python scripts/compute_video_checksums.py VIDEO.avi [INDEX ...]

Each output line is "<index> <sha256-of-rgb24-bytes>". With no INDEX
arguments all frames are printed. Checksums cover the frame as row-major
top-down RGB24 bytes.
"""

import hashlib
import struct
import sys


def _chunks(buf, start, end):
    """Yield (fourcc, payload_start, payload_size) for a RIFF chunk run."""
    pos = start
    while pos + 8 <= end:
        fourcc = buf[pos : pos + 4]
        (size,) = struct.unpack_from("<I", buf, pos + 4)
        yield fourcc, pos + 8, size
        pos += 8 + size + (size % 2)


def parse_avi(buf):
    """Return (width, height, [frame_payload_bytes...]) for BI_RGB video."""
    if buf[:4] != b"RIFF" or buf[8:12] != b"AVI ":
        raise ValueError("not an AVI file")
    width = height = bpp = None
    frames = []
    stack = [(12, len(buf))]
    while stack:
        start, end = stack.pop()
        for fourcc, payload, size in _chunks(buf, start, end):
            if fourcc == b"LIST":
                stack.append((payload + 4, payload + size))
            elif fourcc == b"strf" and width is None:
                _, width, height, _, bpp, compression = struct.unpack_from(
                    "<IiiHHI", buf, payload
                )
                if compression != 0 or bpp != 24:
                    raise ValueError("only uncompressed 24-bit video is supported")
            elif fourcc[2:4] in (b"db", b"dc") and fourcc[:2].isdigit():
                frames.append((payload, size))
    if width is None:
        raise ValueError("no video format header found")
    top_down = height < 0
    height = abs(height)
    stride = (width * 3 + 3) & ~3

    out = []
    for payload, size in frames:
        rows = []
        row_range = range(height) if top_down else range(height - 1, -1, -1)
        for row in row_range:
            rows.append(buf[payload + row * stride : payload + row * stride + width * 3])
        bgr = b"".join(rows)
        # BGR -> RGB byte swap
        rgb = bytearray(bgr)
        rgb[0::3], rgb[2::3] = bgr[2::3], bgr[0::3]
        out.append(bytes(rgb))
    return width, height, out


def main(argv):
    if len(argv) < 1:
        print(__doc__.strip(), file=sys.stderr)
        return 2
    buf = open(argv[0], "rb").read()
    _, _, frames = parse_avi(buf)
    indices = [int(a) for a in argv[1:]] or range(len(frames))
    for i in indices:
        if not 0 <= i < len(frames):
            print(f"frame {i} out of range (video has {len(frames)})", file=sys.stderr)
            return 1
        print(f"{i} {hashlib.sha256(frames[i]).hexdigest()}")
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
