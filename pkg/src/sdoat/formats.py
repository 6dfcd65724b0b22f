"""File formats: sinograms, images, graymaps, reports, profiles, digests.

Sinogram container (extension .sg1): ASCII magic "SDOATSG1", a little-endian
uint64 header length, a canonical JSON header (sorted keys, compact
separators) describing geometry/stage/rates, then the row-major float64
little-endian payload. The header is human-readable with standard tools and
the whole file is bit-reproducible from equal inputs.

Images are stored as a raw little-endian float64 grid (.f64) with a JSON
sidecar (.json) carrying the grid definition and reconstruction metadata,
plus a 16-bit binary portable graymap (.pgm, big-endian sample words per the
PGM convention) for quick visual inspection.

Reports are flat "key=value" text; profiles are two-column CSV. All writes
go through a temporary file and an atomic rename.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
from pathlib import Path

import numpy as np

from .acoustics import STAGE_LINE_PRESSURE, STAGE_PHASE, ScanGeometry, Sinogram
from .errors import ValidationError
from .metrics import MetricsReport
from .phantom import Grid2D
from .reconstruction import ReconImage

SINOGRAM_MAGIC = b"SDOATSG1"


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def atomic_write_bytes(path: str | Path, payload: bytes) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as f:
        f.write(payload)
        f.flush()
        os.fsync(f.fileno())
    os.replace(tmp, path)


def _canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("ascii")


def write_sinogram(path: str | Path, s: Sinogram) -> None:
    geometry = s.geometry
    header = {
        "stage": s.stage,
        "sound_speed": s.sound_speed,
        "provenance": s.provenance,
        "detector_offset": geometry.detector_offset,
        "angles": list(map(float, geometry.angles)),
        "t_start": geometry.t_start,
        "dt": geometry.dt,
        "n_samples": geometry.n_samples,
    }
    blob = _canonical_json(header)
    payload = (
        SINOGRAM_MAGIC
        + struct.pack("<Q", len(blob))
        + blob
        + np.ascontiguousarray(s.data, dtype="<f8").tobytes()
    )
    atomic_write_bytes(path, payload)


def read_sinogram(path: str | Path) -> Sinogram:
    raw = Path(path).read_bytes()
    if len(raw) < 16 or raw[:8] != SINOGRAM_MAGIC:
        raise ValidationError(
            f"{path}: not a sinogram container (bad magic at byte 0)", code="parse"
        )
    (header_len,) = struct.unpack("<Q", raw[8:16])
    if 16 + header_len > len(raw):
        raise ValidationError(
            f"{path}: truncated header (need {header_len} bytes at byte 16)", code="parse"
        )
    try:
        header = json.loads(raw[16 : 16 + header_len])
    except json.JSONDecodeError as e:
        raise ValidationError(f"{path}: header JSON invalid at byte {16 + e.pos}", code="parse")
    required = (
        "stage",
        "sound_speed",
        "provenance",
        "detector_offset",
        "angles",
        "t_start",
        "dt",
        "n_samples",
    )
    missing = [k for k in required if k not in header]
    if missing:
        raise ValidationError(f"{path}: header missing {missing}", code="parse")
    if header["stage"] not in (STAGE_LINE_PRESSURE, STAGE_PHASE):
        raise ValidationError(f"{path}: unknown stage {header['stage']!r}", code="parse")
    geometry = ScanGeometry(
        detector_offset=header["detector_offset"],
        angles=np.asarray(header["angles"], dtype=float),
        t_start=header["t_start"],
        dt=header["dt"],
        n_samples=int(header["n_samples"]),
    )
    body = raw[16 + header_len :]
    expected = geometry.n_angles * geometry.n_samples * 8
    if len(body) != expected:
        raise ValidationError(
            f"{path}: payload is {len(body)} bytes at byte {16 + header_len}, "
            f"expected {expected}",
            code="parse",
        )
    data = np.frombuffer(body, dtype="<f8").reshape(geometry.n_angles, geometry.n_samples)
    return Sinogram(
        data=data,
        geometry=geometry,
        stage=header["stage"],
        sound_speed=header["sound_speed"],
        provenance=header["provenance"],
    )


def write_image(path_base: str | Path, image: ReconImage) -> dict:
    """Write <base>.f64 + <base>.json + <base>.pgm; returns the path map."""
    base = Path(path_base)
    f64_path = base.with_suffix(".f64")
    json_path = base.with_suffix(".json")
    pgm_path = base.with_suffix(".pgm")
    grid = image.grid
    atomic_write_bytes(f64_path, np.ascontiguousarray(image.values, dtype="<f8").tobytes())
    sidecar = {
        "nx": grid.nx,
        "ny": grid.ny,
        "pitch": grid.pitch,
        "center": list(grid.center),
        "scan_radius": grid.scan_radius,
        "metadata": _jsonable(image.metadata),
    }
    atomic_write_bytes(json_path, _canonical_json(sidecar) + b"\n")
    atomic_write_bytes(pgm_path, _render_pgm(image.values))
    return {"f64": f64_path, "json": json_path, "pgm": pgm_path}


def read_image(path_base: str | Path) -> ReconImage:
    base = Path(path_base)
    f64_path = base.with_suffix(".f64")
    json_path = base.with_suffix(".json")
    try:
        sidecar = json.loads(json_path.read_text())
    except FileNotFoundError:
        raise ValidationError(f"{json_path}: image sidecar missing", code="parse")
    except json.JSONDecodeError as e:
        raise ValidationError(f"{json_path}: sidecar JSON invalid at byte {e.pos}", code="parse")
    for key in ("nx", "ny", "pitch", "center", "scan_radius", "metadata"):
        if key not in sidecar:
            raise ValidationError(f"{json_path}: sidecar missing {key!r}", code="parse")
    grid = Grid2D(
        nx=int(sidecar["nx"]),
        ny=int(sidecar["ny"]),
        pitch=sidecar["pitch"],
        center=tuple(sidecar["center"]),
        scan_radius=sidecar["scan_radius"],
    )
    raw = f64_path.read_bytes()
    expected = grid.nx * grid.ny * 8
    if len(raw) != expected:
        raise ValidationError(
            f"{f64_path}: payload is {len(raw)} bytes, expected {expected}", code="parse"
        )
    values = np.frombuffer(raw, dtype="<f8").reshape(grid.ny, grid.nx)
    return ReconImage(grid=grid, values=values, metadata=sidecar["metadata"])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def _render_pgm(values: np.ndarray) -> bytes:
    """16-bit binary PGM; the value range is mapped to 0..65535."""
    lo = float(values.min())
    hi = float(values.max())
    scale = 65535.0 / (hi - lo) if hi > lo else 0.0
    # row 0 of the grid is the smallest y; PGM rows go top-down
    pixels = np.flipud(np.round((values - lo) * scale)).astype(">u2")
    header = f"P5\n{values.shape[1]} {values.shape[0]}\n65535\n".encode("ascii")
    return header + pixels.tobytes()


def read_pgm(path: str | Path) -> np.ndarray:
    """P2/P5 portable graymap reader; returns a (rows, cols) uint array."""
    raw = Path(path).read_bytes()
    if raw[:2] not in (b"P2", b"P5"):
        raise ValidationError(f"{path}: not a P2/P5 graymap (bad magic)", code="parse")
    binary = raw[:2] == b"P5"
    # header tokens: magic, width, height, maxval; comments run # to newline
    tokens: list[bytes] = []
    pos = 2
    while len(tokens) < 3:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if pos < len(raw) and raw[pos : pos + 1] == b"#":
            while pos < len(raw) and raw[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValidationError(f"{path}: truncated graymap header at byte {pos}", code="parse")
        tokens.append(raw[start:pos])
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError:
        raise ValidationError(f"{path}: non-numeric graymap header", code="parse")
    if width <= 0 or height <= 0 or not (0 < maxval < 65536):
        raise ValidationError(f"{path}: graymap header out of range", code="parse")
    if binary:
        pos += 1  # single whitespace byte after maxval
        dtype = ">u2" if maxval > 255 else "u1"
        count = width * height
        need = count * np.dtype(dtype).itemsize
        body = raw[pos : pos + need]
        if len(body) != need:
            raise ValidationError(
                f"{path}: graymap payload short at byte {pos + len(body)}", code="parse"
            )
        data = np.frombuffer(body, dtype=dtype)
    else:
        try:
            data = np.array(raw[pos:].split(), dtype=np.int64)
        except ValueError:
            raise ValidationError(f"{path}: non-numeric graymap sample", code="parse")
        if data.size != width * height:
            raise ValidationError(
                f"{path}: expected {width * height} samples, got {data.size}", code="parse"
            )
    if data.max(initial=0) > maxval:
        raise ValidationError(f"{path}: sample exceeds declared maxval", code="parse")
    return data.reshape(height, width).astype(np.uint16)


def write_report(path: str | Path, report: MetricsReport) -> None:
    lines = []
    for name in (
        "sensitivity",
        "noise_floor",
        "nep",
        "nep_density",
        "r_bw",
        "bandwidth_used",
        "sound_speed_used",
        "noise_mean",
        "coherence_slope",
        "coherence_slope_sigma",
    ):
        lines.append(f"{name}={getattr(report, name)!r}")
    lines.append(f"coherence_flagged={'true' if report.coherence_flagged else 'false'}")
    for name in ("fwhm_x", "fwhm_y", "truth_fwhm_x", "truth_fwhm_y"):
        values = getattr(report, name)
        lines.append(f"{name}={','.join(repr(v) for v in values)}")
    atomic_write_bytes(path, ("\n".join(lines) + "\n").encode("ascii"))


def read_report(path: str | Path) -> MetricsReport:
    fields: dict = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValidationError(f"{path}:{lineno}: expected key=value", code="parse")
        key, _, value = line.partition("=")
        fields[key.strip()] = value.strip()
    try:
        kwargs = {
            name: float(fields[name])
            for name in (
                "sensitivity",
                "noise_floor",
                "nep",
                "nep_density",
                "r_bw",
                "bandwidth_used",
                "sound_speed_used",
                "noise_mean",
                "coherence_slope",
                "coherence_slope_sigma",
            )
        }
        kwargs["coherence_flagged"] = fields["coherence_flagged"] == "true"
        for name in ("fwhm_x", "fwhm_y", "truth_fwhm_x", "truth_fwhm_y"):
            text = fields[name]
            kwargs[name] = tuple(float(v) for v in text.split(",")) if text else ()
    except KeyError as e:
        raise ValidationError(f"{path}: report missing key {e.args[0]!r}", code="parse")
    except ValueError:
        raise ValidationError(f"{path}: malformed numeric value", code="parse")
    return MetricsReport(**kwargs)


def write_profile_csv(path: str | Path, coordinates: np.ndarray, values: np.ndarray, header: str) -> None:
    lines = [f"# {header}", "coordinate_m,value"]
    for c, v in zip(coordinates, values):
        lines.append(f"{float(c)!r},{float(v)!r}")
    atomic_write_bytes(path, ("\n".join(lines) + "\n").encode("ascii"))
