"""Subprocess entry point that decodes video frames with OpenCV.

The main process never imports a codec library; when no ffmpeg binary is
available it launches this module in a fresh interpreter instead:

    python -m increport._decode_worker probe <video>
    python -m increport._decode_worker extract <video> <idx,idx,...>

``probe`` prints a JSON object {frame_count, fps, width, height}.
``extract`` prints a JSON header line {width, height, count} followed by
raw RGB24 bytes for each requested frame, in the order requested.

Exit codes: 0 ok, 2 undecodable input, 3 frame index out of range.
"""

import json
import sys


def _fail(code: int, message: str) -> "int":
    sys.stderr.write(message + "\n")
    return code


def main(argv: list[str]) -> int:
    if len(argv) < 2 or argv[0] not in ("probe", "extract"):
        return _fail(2, "usage: probe <video> | extract <video> <idx,idx,...>")
    command, path = argv[0], argv[1]

    import cv2  # deliberately imported only inside the worker process

    cap = cv2.VideoCapture(path)
    if not cap.isOpened():
        return _fail(2, f"cannot open video: {path}")

    fps = cap.get(cv2.CAP_PROP_FPS) or 0.0
    if fps <= 0:
        fps = 30.0

    if command == "probe":
        frame_count = 0
        width = height = 0
        while True:
            ok, frame = cap.read()
            if not ok:
                break
            if frame_count == 0:
                height, width = frame.shape[:2]
            frame_count += 1
        if frame_count == 0:
            return _fail(2, f"no decodable frames in: {path}")
        print(json.dumps({"frame_count": frame_count, "fps": fps, "width": width, "height": height}))
        return 0

    if len(argv) < 3:
        return _fail(2, "extract requires a comma-separated index list")
    try:
        wanted = sorted({int(s) for s in argv[2].split(",") if s != ""})
    except ValueError:
        return _fail(2, f"bad index list: {argv[2]!r}")
    if wanted and wanted[0] < 0:
        return _fail(3, f"negative frame index: {wanted[0]}")

    frames = {}
    index = 0
    while wanted and index <= wanted[-1]:
        ok, frame = cap.read()
        if not ok:
            return _fail(3, f"frame index {wanted[-1]} out of range (video has {index} frames)")
        if index in wanted:
            frames[index] = cv2.cvtColor(frame, cv2.COLOR_BGR2RGB)
        index += 1

    out = sys.stdout.buffer
    if frames:
        first = next(iter(frames.values()))
        header = {"width": first.shape[1], "height": first.shape[0], "count": len(wanted)}
    else:
        header = {"width": 0, "height": 0, "count": 0}
    out.write((json.dumps(header) + "\n").encode("ascii"))
    for idx in wanted:
        out.write(frames[idx].tobytes())
    out.flush()
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
