"""Run configuration files and dataset manifests."""

from __future__ import annotations

import csv
import hashlib
import os
from dataclasses import asdict, dataclass, fields

from .evaluation import Label
from .imagio import ColorSpace


class ManifestError(ValueError):
    pass


@dataclass
class RunConfig:
    color_space: str = "HSV"
    trees: int = 500
    folds: int = 3
    patience: int = 2
    max_layers: int = 12
    seed: int = 0
    aggregate: str = "frame"
    gsm: bool = False
    protocol: str = "holdout"
    test_fold: int = 1
    val_fraction: float = 0.2
    gsm_max_patches: int = 20000
    gsm_min_samples_leaf: int = 5
    # execution setting: excluded from provenance so outputs do not depend on it
    workers: int | None = None

    def __post_init__(self):
        self.color_space = ColorSpace.parse(self.color_space).value
        if self.trees < 1:
            raise ValueError("trees must be >= 1")
        if self.folds < 2:
            raise ValueError("folds must be >= 2")
        if self.patience < 1 or self.max_layers < 1:
            raise ValueError("patience and max_layers must be >= 1")
        if self.aggregate not in ("frame", "mean"):
            raise ValueError("aggregate must be 'frame' or 'mean'")
        if self.protocol not in ("holdout", "kfold5"):
            raise ValueError("protocol must be 'holdout' or 'kfold5'")
        if not 0.0 < self.val_fraction < 1.0:
            raise ValueError("val_fraction must lie in (0, 1)")
        if self.workers is not None and self.workers < 1:
            raise ValueError("workers must be >= 1")

    def provenance(self) -> dict:
        d = asdict(self)
        d.pop("workers")
        return d

    @classmethod
    def from_mapping(cls, values: dict) -> "RunConfig":
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            name = key.strip().replace("-", "_")
            if name not in known:
                raise ValueError(f"unknown config key {key!r}")
            kwargs[name] = _coerce(known[name].type, raw)
        return cls(**kwargs)


def _coerce(type_name, raw):
    if not isinstance(raw, str):
        return raw
    raw = raw.strip()
    t = str(type_name)
    if t == "bool":
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if t.startswith("int"):
        return None if raw.lower() == "none" else int(raw)
    if t == "float":
        return float(raw)
    return raw


def read_config_file(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, value = line.split("=", 1)
            values[key.strip()] = value.strip()
    return values


@dataclass(frozen=True)
class Record:
    path: str
    label: Label
    subject: str
    group: str | None = None
    fold: int | None = None


@dataclass
class DatasetManifest:
    records: list[Record]
    source: str | None = None

    def __len__(self) -> int:
        return len(self.records)

    @property
    def labels(self):
        return [int(r.label) for r in self.records]

    @property
    def subjects(self):
        return [r.subject for r in self.records]

    def digest(self) -> str:
        """SHA-256 over the manifest rows and the bytes of every image."""
        h = hashlib.sha256()
        for r in self.records:
            h.update(f"{os.path.basename(r.path)},{r.label.name},{r.subject},{r.group},{r.fold}\n".encode())
            with open(r.path, "rb") as fh:
                h.update(hashlib.sha256(fh.read()).digest())
        return h.hexdigest()


def read_manifest(path) -> DatasetManifest:
    """Load a ``path,label,subject,group,fold`` CSV; paths resolve against its folder."""
    base = os.path.dirname(os.path.abspath(path))
    records = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"path", "label", "subject"} - set(reader.fieldnames or [])
        if missing:
            raise ManifestError(f"{path}: missing columns {sorted(missing)}")
        for lineno, row in enumerate(reader, 2):
            try:
                label = Label.parse(row["label"])
            except ValueError as exc:
                raise ManifestError(f"{path}:{lineno}: {exc}") from None
            img_path = row["path"].strip()
            if not os.path.isabs(img_path):
                img_path = os.path.join(base, img_path)
            if not os.path.isfile(img_path):
                raise ManifestError(f"{path}:{lineno}: image not found: {row['path']}")
            subject = (row.get("subject") or "").strip()
            if not subject:
                raise ManifestError(f"{path}:{lineno}: empty subject")
            group = (row.get("group") or "").strip() or None
            fold_text = (row.get("fold") or "").strip()
            try:
                fold = int(fold_text) if fold_text else None
            except ValueError:
                raise ManifestError(f"{path}:{lineno}: fold must be an integer") from None
            records.append(Record(img_path, label, subject, group, fold))
    if not records:
        raise ManifestError(f"{path}: no records")
    group_labels: dict[str, Label] = {}
    for r in records:
        if r.group is not None and group_labels.setdefault(r.group, r.label) != r.label:
            raise ManifestError(f"{path}: group {r.group!r} mixes labels")
    return DatasetManifest(records, path)
