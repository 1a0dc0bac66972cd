"""Core containers plus readers and writers for manifests and member predictions."""

from __future__ import annotations

import csv
import io
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

NIH_CLASSES = (
    "Atelectasis",
    "Cardiomegaly",
    "Consolidation",
    "Edema",
    "Effusion",
    "Emphysema",
    "Fibrosis",
    "Hernia",
    "Infiltration",
    "Mass",
    "Nodule",
    "Pleural Thickening",
    "Pneumonia",
    "Pneumothorax",
)
NO_FINDING = "No Finding"

BINARY_MAGIC = b"UQPM"
BINARY_VERSION = 1

_IMAGE_COLUMNS = ("image index", "image_id", "image id", "imageid")
_FINDING_COLUMNS = ("finding labels", "finding_labels", "findings", "labels")
_PATIENT_COLUMNS = ("patient id", "patient_id", "patientid")


class ValidationError(ValueError):
    """Input data violates a container invariant."""


def _norm(name: str) -> str:
    # NIH spells it "Pleural_Thickening"; compare case-insensitively with '_' as ' '.
    return " ".join(name.replace("_", " ").split()).casefold()


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ClassCatalog:
    names: tuple[str, ...] = NIH_CLASSES

    def __post_init__(self):
        names = tuple(self.names)
        object.__setattr__(self, "names", names)
        if not names:
            raise ValidationError("class catalog is empty")
        if any(not n or not n.strip() for n in names):
            raise ValidationError("class names must be non-empty")
        keys = [_norm(n) for n in names]
        if len(set(keys)) != len(keys):
            raise ValidationError(f"class names are not unique: {names}")

    @property
    def count(self) -> int:
        return len(self.names)

    def __len__(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        """Position of ``name``; tolerant of case and underscore spelling."""
        key = _norm(name)
        for i, n in enumerate(self.names):
            if _norm(n) == key:
                return i
        raise KeyError(name)


@dataclass(frozen=True)
class ManifestEntry:
    image_id: str
    patient_id: str
    labels: tuple[int, ...]


@dataclass(frozen=True)
class DatasetManifest:
    entries: tuple[ManifestEntry, ...]
    catalog: ClassCatalog = field(default_factory=ClassCatalog)

    def __post_init__(self):
        entries = tuple(self.entries)
        object.__setattr__(self, "entries", entries)
        seen: set[str] = set()
        k = self.catalog.count
        for row, e in enumerate(entries):
            if e.image_id in seen:
                raise ValidationError(f"duplicate image_id {e.image_id!r}")
            seen.add(e.image_id)
            if len(e.labels) != k:
                raise ValidationError(
                    f"image {e.image_id!r} has {len(e.labels)} labels, expected {k}"
                )
            if any(v not in (0, 1) for v in e.labels):
                raise ValidationError(f"image {e.image_id!r} has non-binary labels (row {row})")

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def image_ids(self) -> list[str]:
        return [e.image_id for e in self.entries]

    def subset(self, image_ids: Iterable[str]) -> "DatasetManifest":
        """Entries whose id is in ``image_ids``, keeping manifest order."""
        keep = set(image_ids)
        return DatasetManifest(tuple(e for e in self.entries if e.image_id in keep), self.catalog)

    def label_matrix(self) -> "LabelMatrix":
        values = np.array([e.labels for e in self.entries], dtype=np.int8).reshape(
            len(self.entries), self.catalog.count
        )
        return LabelMatrix(values=_readonly(values), image_ids=tuple(self.image_ids))


@dataclass(frozen=True, eq=False)
class LabelMatrix:
    values: np.ndarray  # (N, K) int8 in {0, 1}
    image_ids: tuple[str, ...]

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 2 or v.shape[0] != len(self.image_ids):
            raise ValidationError("label matrix shape does not match image_ids")
        if not np.isin(v, (0, 1)).all():
            raise ValidationError("labels must be 0 or 1")

    def aligned_to(self, image_ids: Sequence[str]) -> "LabelMatrix":
        """Reorder rows to ``image_ids``; the id sets must be identical."""
        image_ids = tuple(image_ids)
        if image_ids == self.image_ids:
            return self
        if set(image_ids) != set(self.image_ids) or len(image_ids) != len(self.image_ids):
            raise ValidationError("label rows and prediction rows cover different image ids")
        pos = {iid: i for i, iid in enumerate(self.image_ids)}
        order = [pos[i] for i in image_ids]
        return LabelMatrix(_readonly(self.values[order].copy()), image_ids)


@dataclass(frozen=True, eq=False)
class PredictionTensor:
    """Probabilities indexed (sample, class, member), stored as float64."""

    values: np.ndarray
    member_ids: tuple[str, ...]
    image_ids: tuple[str, ...]
    catalog: ClassCatalog = field(default_factory=ClassCatalog)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 3:
            raise ValidationError(f"prediction tensor must be 3-D, got shape {v.shape}")
        n, k, m = v.shape
        object.__setattr__(self, "member_ids", tuple(self.member_ids))
        object.__setattr__(self, "image_ids", tuple(self.image_ids))
        if m < 1:
            raise ValidationError("at least one member is required")
        if len(self.member_ids) != m or len(set(self.member_ids)) != m:
            raise ValidationError("member_ids must be unique and match the member axis")
        if len(self.image_ids) != n or len(set(self.image_ids)) != n:
            raise ValidationError("image_ids must be unique and match the sample axis")
        if k != self.catalog.count:
            raise ValidationError(f"tensor has {k} classes, catalog has {self.catalog.count}")
        bad = ~((v >= 0.0) & (v <= 1.0))  # also catches NaN
        if bad.any():
            i, j, mm = (int(x) for x in np.argwhere(bad)[0])
            raise ValidationError(
                f"probability {v[i, j, mm]!r} out of [0,1] at row {i} "
                f"(image {self.image_ids[i]!r}), class {self.catalog.names[j]!r}, "
                f"member {self.member_ids[mm]!r}"
            )
        if v is self.values and v.flags.writeable:
            v = v.copy()
        object.__setattr__(self, "values", _readonly(v))

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.values.shape

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    @property
    def n_classes(self) -> int:
        return self.values.shape[1]

    @property
    def n_members(self) -> int:
        return self.values.shape[2]

    def permute_members(self, order: Sequence[int]) -> "PredictionTensor":
        order = list(order)
        return PredictionTensor(
            self.values[:, :, order].copy(),
            tuple(self.member_ids[i] for i in order),
            self.image_ids,
            self.catalog,
        )


def member_slice(t: PredictionTensor, m: int) -> np.ndarray:
    """The (N, K) probability matrix of member ``m``."""
    if not 0 <= m < t.n_members:
        raise IndexError(f"member index {m} out of range for {t.n_members} members")
    return t.values[:, :, m]


# --------------------------------------------------------------------------- manifests


def _find_column(header: list[str], aliases: tuple[str, ...], what: str) -> int:
    norm = [h.strip().casefold() for h in header]
    for a in aliases:
        if a in norm:
            return norm.index(a)
    raise ValidationError(f"manifest is missing the {what} column (header: {header})")


def parse_nih_manifest(csv_text: str, catalog: ClassCatalog | None = None) -> DatasetManifest:
    """Parse an NIH ChestX-ray14 style label file.

    Columns are located by header name (``Image Index``, ``Finding Labels``,
    ``Patient ID`` or snake_case equivalents); other columns are ignored.
    ``No Finding`` encodes the all-zero label vector.
    """
    catalog = catalog or ClassCatalog()
    reader = csv.reader(io.StringIO(csv_text))
    try:
        header = next(reader)
    except StopIteration:
        raise ValidationError("manifest is empty") from None
    c_img = _find_column(header, _IMAGE_COLUMNS, "image id")
    c_find = _find_column(header, _FINDING_COLUMNS, "finding labels")
    c_pat = _find_column(header, _PATIENT_COLUMNS, "patient id")

    entries = []
    seen: set[str] = set()
    for row_no, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        try:
            image_id = row[c_img].strip()
            findings = row[c_find].strip()
            patient_id = row[c_pat].strip()
        except IndexError:
            raise ValidationError(f"row {row_no} has too few columns") from None
        if not image_id:
            raise ValidationError(f"row {row_no} has an empty image id")
        if image_id in seen:
            raise ValidationError(f"duplicate image_id {image_id!r} at row {row_no}")
        seen.add(image_id)
        labels = [0] * catalog.count
        if findings and _norm(findings) != _norm(NO_FINDING):
            for token in findings.split("|"):
                token = token.strip()
                try:
                    labels[catalog.index(token)] = 1
                except KeyError:
                    raise ValidationError(
                        f"unknown pathology {token!r} at row {row_no} (image {image_id!r})"
                    ) from None
        entries.append(ManifestEntry(image_id, patient_id, tuple(labels)))
    return DatasetManifest(tuple(entries), catalog)


def read_manifest(path: str | Path, catalog: ClassCatalog | None = None) -> DatasetManifest:
    return parse_nih_manifest(Path(path).read_text(encoding="utf-8"), catalog)


def format_manifest(manifest: DatasetManifest) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["Image Index", "Finding Labels", "Patient ID"])
    names = manifest.catalog.names
    for e in manifest.entries:
        found = "|".join(names[i] for i, v in enumerate(e.labels) if v) or NO_FINDING
        w.writerow([e.image_id, found, e.patient_id])
    return buf.getvalue()


# --------------------------------------------------------------------------- member CSV


def parse_member_csv(
    text: str, catalog: ClassCatalog, member_id: str = "?"
) -> tuple[list[str], np.ndarray]:
    """Parse ``image_id,<class1>,...,<classK>``; columns are mapped by class name."""
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ValidationError(f"member {member_id!r}: file is empty") from None
    if not header or header[0].strip().casefold() != "image_id":
        raise ValidationError(f"member {member_id!r}: first column must be image_id")
    cols = []
    for name in header[1:]:
        try:
            cols.append(catalog.index(name.strip()))
        except KeyError:
            raise ValidationError(f"member {member_id!r}: unknown class column {name!r}") from None
    if sorted(cols) != list(range(catalog.count)):
        raise ValidationError(
            f"member {member_id!r}: class columns do not match the catalog {catalog.names}"
        )

    ids: list[str] = []
    rows: list[list[float]] = []
    for row_no, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise ValidationError(f"member {member_id!r}: row {row_no} has {len(row)} fields")
        out = [0.0] * catalog.count
        for raw, k in zip(row[1:], cols):
            try:
                v = float(raw)
            except ValueError:
                raise ValidationError(
                    f"member {member_id!r}: row {row_no}, class {catalog.names[k]!r}: "
                    f"not a number {raw!r}"
                ) from None
            if math.isnan(v) or not 0.0 <= v <= 1.0:
                raise ValidationError(
                    f"member {member_id!r}: row {row_no} (image {row[0]!r}), "
                    f"class {catalog.names[k]!r}: probability {raw} outside [0,1]"
                )
            out[k] = v
        ids.append(row[0].strip())
        rows.append(out)
    values = np.array(rows, dtype=np.float64).reshape(len(rows), catalog.count)
    return ids, values


def format_member_csv(image_ids: Sequence[str], matrix: np.ndarray, catalog: ClassCatalog) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["image_id", *catalog.names])
    for iid, row in zip(image_ids, np.asarray(matrix, dtype=np.float64)):
        w.writerow([iid, *(repr(float(v)) for v in row)])
    return buf.getvalue()


def load_predictions(
    member_files: Sequence[tuple[str, str | Path]], manifest: DatasetManifest
) -> PredictionTensor:
    """Stack member CSV files into a tensor whose rows follow manifest order."""
    if not member_files:
        raise ValidationError("no member files given")
    catalog = manifest.catalog
    order = manifest.image_ids
    wanted = set(order)
    mats = []
    for member_id, path in member_files:
        ids, values = parse_member_csv(Path(path).read_text(encoding="utf-8"), catalog, member_id)
        pos: dict[str, int] = {}
        for i, iid in enumerate(ids):
            if iid in pos:
                raise ValidationError(f"member {member_id!r}: duplicate image_id {iid!r}")
            pos[iid] = i
        missing = [i for i in order if i not in pos]
        if missing:
            raise ValidationError(
                f"member {member_id!r} is missing {len(missing)} manifest image(s), "
                f"e.g. {missing[0]!r}"
            )
        extra = [i for i in ids if i not in wanted]
        if extra:
            raise ValidationError(
                f"member {member_id!r} has {len(extra)} image(s) not in the manifest, "
                f"e.g. {extra[0]!r}"
            )
        mats.append(values[[pos[i] for i in order]])
    values = np.stack(mats, axis=2)
    return PredictionTensor(values, tuple(m for m, _ in member_files), tuple(order), catalog)


# --------------------------------------------------------------------------- binary


def _put_str(buf: io.BytesIO, s: str) -> None:
    raw = s.encode("utf-8")
    buf.write(struct.pack("<I", len(raw)))
    buf.write(raw)


def encode_binary(t: PredictionTensor) -> bytes:
    """``UQPM`` | u16 version | u32 N,K,M | ids | float32 values (sample, class, member)."""
    n, k, m = t.shape
    buf = io.BytesIO()
    buf.write(BINARY_MAGIC)
    buf.write(struct.pack("<HIII", BINARY_VERSION, n, k, m))
    for s in t.member_ids:
        _put_str(buf, s)
    for s in t.image_ids:
        _put_str(buf, s)
    buf.write(np.ascontiguousarray(t.values, dtype="<f4").tobytes())
    return buf.getvalue()


def decode_binary(data: bytes, catalog: ClassCatalog | None = None) -> PredictionTensor:
    view = memoryview(data)
    if bytes(view[:4]) != BINARY_MAGIC:
        raise ValidationError("not a UQPM prediction file (bad magic)")
    try:
        version, n, k, m = struct.unpack_from("<HIII", view, 4)
    except struct.error:
        raise ValidationError("truncated UQPM header") from None
    if version != BINARY_VERSION:
        raise ValidationError(f"unsupported UQPM version {version}")
    off = 4 + struct.calcsize("<HIII")

    def take_str() -> str:
        nonlocal off
        (length,) = struct.unpack_from("<I", view, off)
        off += 4
        s = bytes(view[off : off + length]).decode("utf-8")
        off += length
        return s

    try:
        member_ids = tuple(take_str() for _ in range(m))
        image_ids = tuple(take_str() for _ in range(n))
    except (struct.error, UnicodeDecodeError) as exc:
        raise ValidationError(f"corrupt UQPM id block: {exc}") from None
    need = n * k * m * 4
    if len(view) - off != need:
        raise ValidationError(f"UQPM payload has {len(view) - off} bytes, expected {need}")
    values = np.frombuffer(view[off:], dtype="<f4").astype(np.float64).reshape(n, k, m)
    if catalog is None:
        catalog = ClassCatalog() if k == len(NIH_CLASSES) else ClassCatalog(
            tuple(f"class_{i}" for i in range(k))
        )
    return PredictionTensor(values, member_ids, image_ids, catalog)


def write_binary(t: PredictionTensor, path: str | Path) -> None:
    Path(path).write_bytes(encode_binary(t))


def read_binary(
    path: str | Path, manifest: DatasetManifest | None = None, catalog: ClassCatalog | None = None
) -> PredictionTensor:
    """Read a UQPM file; with a manifest, rows are reordered to manifest order."""
    if manifest is not None:
        catalog = manifest.catalog
    t = decode_binary(Path(path).read_bytes(), catalog)
    if manifest is None:
        return t
    return align_to_manifest(t, manifest)


def align_to_manifest(t: PredictionTensor, manifest: DatasetManifest) -> PredictionTensor:
    order = manifest.image_ids
    if tuple(order) == t.image_ids:
        return t
    if set(order) != set(t.image_ids):
        missing = sorted(set(order) - set(t.image_ids))
        extra = sorted(set(t.image_ids) - set(order))
        raise ValidationError(
            f"prediction ids do not match the manifest "
            f"({len(missing)} missing, {len(extra)} unexpected)"
        )
    pos = {iid: i for i, iid in enumerate(t.image_ids)}
    idx = [pos[i] for i in order]
    return PredictionTensor(t.values[idx], t.member_ids, tuple(order), t.catalog)
