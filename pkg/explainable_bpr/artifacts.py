"""On-disk formats for every pipeline artifact.

All text artifacts are tab-separated with an optional ``# key=value`` header
line. Floats are written with ``repr`` so they read back bit-identically.
"""

import hashlib
import json
import logging
import platform
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.sparse import csr_matrix

from .constants import PACKAGE_VERSION
from .dataset import InteractionDataset, LooSplit
from .errors import DataError, UsageError
from .explainability import ExplainabilityMatrix, ItemNeighborhoods
from .model import FactorModel
from .propensity import PropensityModel
from .schemas import EvalReport, ReplicateSummary

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

USERS_FILE = "users.tsv"
ITEMS_FILE = "items.tsv"
INTERACTIONS_FILE = "interactions.tsv"
SPLIT_FILE = "split.tsv"
PROPENSITY_FILE = "propensity.tsv"
CHECKPOINT_MAGIC = "EBPRCKPT1"

# Artifact name -> subcommand that writes it
PRODUCERS = {
    INTERACTIONS_FILE: "ingest",
    SPLIT_FILE: "split",
    PROPENSITY_FILE: "precompute",
    "neighborhoods": "precompute",
    "explainability": "precompute",
    "search": "tune",
    "checkpoint": "train",
}


def require_artifact(path: PathLike, producer: str) -> Path:
    """Return ``path`` or raise a usage error naming the subcommand that creates it."""
    path = Path(path)
    if not path.exists():
        raise UsageError(
            f"Missing {path}; run `explainable-bpr {producer}` first",
            code="MISSING_ARTIFACT",
            details={"path": str(path), "producer": producer},
        )
    return path


def _malformed(path: PathLike, reason: str) -> DataError:
    return DataError(
        f"Malformed artifact {path}: {reason}",
        code="MALFORMED_ARTIFACT",
        details={"path": str(path)},
    )


def _numeric_table(path: PathLike, rows: List[List[str]], width: int) -> np.ndarray:
    try:
        return np.asarray(rows, dtype=np.float64).reshape(-1, width)
    except ValueError as e:
        raise _malformed(path, str(e))


def _header(values: Dict[str, object]) -> str:
    return "# " + " ".join(f"{key}={value}" for key, value in values.items()) + "\n"


def _read_rows(path: PathLike) -> Tuple[Dict[str, str], List[List[str]]]:
    header: Dict[str, str] = {}
    rows: List[List[str]] = []
    with open(path, "r", encoding="utf-8") as handle:
        for line in handle:
            line = line.rstrip("\n")
            if line.startswith("#"):
                for token in line[1:].split():
                    key, _, value = token.partition("=")
                    header[key] = value
            elif line:
                rows.append(line.split("\t"))
    return header, rows


# ==========================================
# DATASET AND SPLIT
# ==========================================


def save_dataset(ds: InteractionDataset, directory: PathLike) -> None:
    """Write the id maps and the indexed interactions."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name, ids in ((USERS_FILE, ds.user_ids), (ITEMS_FILE, ds.item_ids)):
        with open(directory / name, "w", encoding="utf-8") as handle:
            handle.writelines(f"{index}\t{raw}\n" for index, raw in enumerate(ids))
    with open(directory / INTERACTIONS_FILE, "w", encoding="utf-8") as handle:
        handle.write(_header({"users": ds.n_users, "items": ds.n_items}))
        for row in zip(ds.users, ds.items, ds.timestamps, ds.sequence):
            handle.write("\t".join(str(int(value)) for value in row) + "\n")


def load_dataset(directory: PathLike) -> InteractionDataset:
    directory = Path(directory)
    path = require_artifact(directory / INTERACTIONS_FILE, PRODUCERS[INTERACTIONS_FILE])
    ids = []
    for name in (USERS_FILE, ITEMS_FILE):
        _, rows = _read_rows(require_artifact(directory / name, "ingest"))
        ids.append(tuple(row[1] for row in rows))
    _, rows = _read_rows(path)
    table = np.asarray(rows, dtype=np.int64).reshape(-1, 4)
    return InteractionDataset(ids[0], ids[1], table[:, 0], table[:, 1], table[:, 2], table[:, 3])


def save_split(split: LooSplit, path: PathLike) -> None:
    """One row per user: test item, validation item, test and validation negatives."""
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(
            _header({"seed": split.seed, "negatives": split.test_negatives.shape[1]})
        )
        for user in range(split.n_users):
            handle.write(
                f"{user}\t{split.test_items[user]}\t{split.validation_items[user]}\t"
                + ",".join(map(str, split.test_negatives[user]))
                + "\t"
                + ",".join(map(str, split.validation_negatives[user]))
                + "\n"
            )


def load_split(path: PathLike, full: InteractionDataset) -> LooSplit:
    """Rebuild a split from its manifest and the full dataset."""
    path = require_artifact(path, PRODUCERS[SPLIT_FILE])
    header, rows = _read_rows(path)
    if len(rows) != full.n_users:
        raise _malformed(path, f"{len(rows)} rows for {full.n_users} users")
    test_items = np.asarray([int(row[1]) for row in rows], dtype=np.int64)
    validation_items = np.asarray([int(row[2]) for row in rows], dtype=np.int64)
    test_negatives = np.asarray([row[3].split(",") for row in rows], dtype=np.int64)
    validation_negatives = np.asarray([row[4].split(",") for row in rows], dtype=np.int64)

    users = np.arange(full.n_users)
    held_out = full.contains(users, test_items) & full.contains(users, validation_items)
    if not held_out.all():
        raise _malformed(path, "held-out items are not positives of the dataset")
    held = np.concatenate([test_items, validation_items]) + np.tile(users * full.n_items, 2)
    keep = ~np.isin(full.users * full.n_items + full.items, held)
    return LooSplit(
        full=full,
        train=full.subset(keep),
        test_items=test_items,
        test_negatives=test_negatives,
        validation_items=validation_items,
        validation_negatives=validation_negatives,
        seed=int(header.get("seed", 0)),
    )


# ==========================================
# NEIGHBORHOODS, EXPLAINABILITY, PROPENSITY
# ==========================================


def save_neighborhoods(neighborhoods: ItemNeighborhoods, path: PathLike) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(_header({"eta": neighborhoods.eta, "items": neighborhoods.n_items}))
        for item in range(neighborhoods.n_items):
            pairs = ",".join(f"{n}:{s!r}" for n, s in neighborhoods.neighbors(item))
            handle.write(f"{item}\t{pairs}\n")


def load_neighborhoods(path: PathLike) -> ItemNeighborhoods:
    path = require_artifact(path, PRODUCERS["neighborhoods"])
    header, rows = _read_rows(path)
    indptr = [0]
    indices: List[int] = []
    similarities: List[float] = []
    for row in rows:
        for pair in filter(None, (row[1] if len(row) > 1 else "").split(",")):
            neighbor, _, similarity = pair.partition(":")
            indices.append(int(neighbor))
            similarities.append(float(similarity))
        indptr.append(len(indices))
    return ItemNeighborhoods(
        eta=int(header["eta"]),
        indptr=np.asarray(indptr, dtype=np.int64),
        indices=np.asarray(indices, dtype=np.int64),
        similarities=np.asarray(similarities, dtype=np.float64),
    )


def save_explainability(E: ExplainabilityMatrix, path: PathLike) -> None:
    """Nonzero ``(user, item, E)`` triples in row-major order."""
    users, items, values = E.triples()
    n_users, n_items = E.shape
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(
            _header({"eta": E.eta, "source": E.source, "users": n_users, "items": n_items})
        )
        handle.writelines(
            f"{u}\t{i}\t{v!r}\n"
            for u, i, v in zip(users.tolist(), items.tolist(), values.tolist())
        )


def load_explainability(path: PathLike) -> ExplainabilityMatrix:
    path = require_artifact(path, PRODUCERS["explainability"])
    header, rows = _read_rows(path)
    eta = int(header["eta"])
    shape = (int(header["users"]), int(header["items"]))
    if rows:
        table = _numeric_table(path, rows, 3)
        counts = np.rint(table[:, 2] * eta)
        matrix = csr_matrix((counts, (table[:, 0].astype(int), table[:, 1].astype(int))), shape)
    else:
        matrix = csr_matrix(shape)
    return ExplainabilityMatrix(counts=matrix, eta=eta, source=header.get("source", "training"))


def save_propensity(propensity: PropensityModel, path: PathLike) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(
            _header(
                {
                    "eta": propensity.eta,
                    "variant": propensity.variant,
                    "floor": repr(propensity.floor),
                }
            )
        )
        for item, (theta, theta_n) in enumerate(
            zip(propensity.item_propensity, propensity.neighborhood_propensity)
        ):
            handle.write(f"{item}\t{float(theta)!r}\t{float(theta_n)!r}\n")


def load_propensity(path: PathLike) -> PropensityModel:
    path = require_artifact(path, PRODUCERS[PROPENSITY_FILE])
    header, rows = _read_rows(path)
    table = _numeric_table(path, rows, 3)
    return PropensityModel(
        item_propensity=table[:, 1],
        neighborhood_propensity=table[:, 2],
        eta=int(header["eta"]),
        variant=header.get("variant", "neighbor_sum"),
        floor=float(header["floor"]),
    )


# ==========================================
# CHECKPOINTS
# ==========================================


def save_checkpoint(model: FactorModel, path: PathLike) -> None:
    """Text header line, then little-endian float32 P and Q."""
    header = (
        f"{CHECKPOINT_MAGIC} {model.n_users} {model.n_items} {model.latent_dim} "
        f"{model.seed if model.seed is not None else -1} {model.loss or '-'}\n"
    )
    with open(path, "wb") as handle:
        handle.write(header.encode("ascii"))
        handle.write(model.P.astype("<f4").tobytes())
        handle.write(model.Q.astype("<f4").tobytes())


def load_checkpoint(path: PathLike) -> FactorModel:
    path = require_artifact(path, PRODUCERS["checkpoint"])
    with open(path, "rb") as handle:
        header = handle.readline().decode("ascii").split()
        payload = handle.read()
    if len(header) != 6 or header[0] != CHECKPOINT_MAGIC:
        raise _malformed(path, "bad checkpoint header")
    n_users, n_items, latent_dim, seed = (int(value) for value in header[1:5])
    values = np.frombuffer(payload, dtype="<f4")
    if values.size != (n_users + n_items) * latent_dim:
        raise _malformed(path, "checkpoint size does not match its header")
    P = values[: n_users * latent_dim].reshape(n_users, latent_dim).astype(np.float32)
    Q = values[n_users * latent_dim :].reshape(n_items, latent_dim).astype(np.float32)
    return FactorModel(
        P, Q, seed=None if seed < 0 else seed, loss=None if header[5] == "-" else header[5]
    )


# ==========================================
# MANIFESTS AND REPORTS
# ==========================================


def dataset_hash(ds: InteractionDataset) -> str:
    digest = hashlib.sha256()
    for ids in (ds.user_ids, ds.item_ids):
        digest.update("\n".join(ids).encode("utf-8"))
    for values in (ds.users, ds.items, ds.timestamps):
        digest.update(np.ascontiguousarray(values, dtype="<i8").tobytes())
    return digest.hexdigest()


def library_versions() -> Dict[str, str]:
    import numpy
    import pandas
    import pydantic
    import scipy

    return {
        "explainable-bpr": PACKAGE_VERSION,
        "python": platform.python_version(),
        "numpy": numpy.__version__,
        "scipy": scipy.__version__,
        "pandas": pandas.__version__,
        "pydantic": pydantic.VERSION,
    }


def write_manifest(
    path: PathLike,
    command: str,
    config: Dict[str, object],
    seeds: Dict[str, object],
    ds: Optional[InteractionDataset] = None,
    extra: Optional[Dict[str, object]] = None,
) -> None:
    """JSON record sufficient to replay a command."""
    manifest = {
        "command": command,
        "config": config,
        "seeds": seeds,
        "versions": library_versions(),
        "dataset_hash": dataset_hash(ds) if ds is not None else None,
    }
    if extra:
        manifest.update(extra)
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_json(path: PathLike, producer: str) -> Dict[str, object]:
    return json.loads(require_artifact(path, producer).read_text(encoding="utf-8"))


def format_table(headers: Sequence[str], rows: Iterable[Sequence[object]]) -> str:
    """Right-aligned text table; floats shown with 4 decimals."""
    cells = [list(headers)] + [
        [f"{value:.4f}" if isinstance(value, float) else str(value) for value in row]
        for row in rows
    ]
    widths = [max(len(row[col]) for row in cells) for col in range(len(headers))]
    return "\n".join(
        "  ".join(cell.rjust(width) for cell, width in zip(row, widths)) for row in cells
    ) + "\n"


def write_report(
    summaries: Sequence[ReplicateSummary], text_path: PathLike, rows_path: PathLike
) -> str:
    """Aligned mean/std table plus one TSV row per replicate and metric."""
    metrics = sorted({name for summary in summaries for name in summary.mean})
    table_rows = []
    for summary in summaries:
        row: List[object] = [summary.loss, summary.protocol, summary.cutoff, summary.n]
        for name in metrics:
            row.append(f"{summary.mean[name]:.4f}±{summary.std[name]:.4f}")
        table_rows.append(row)
    text = format_table(["loss", "protocol", "K", "n"] + metrics, table_rows)
    Path(text_path).write_text(text, encoding="utf-8")

    reports: List[EvalReport] = [r for summary in summaries for r in summary.reports]
    with open(rows_path, "w", encoding="utf-8") as handle:
        handle.write("loss\tprotocol\tcutoff\tseed\tmetric\tvalue\n")
        for report in reports:
            for row in report.rows():
                handle.write(
                    f"{row['loss']}\t{row['protocol']}\t{row['cutoff']}\t{row['seed']}\t"
                    f"{row['metric']}\t{float(row['value'])!r}\n"
                )
    return text


# ==========================================
# RUN DIRECTORY LAYOUT
# ==========================================


class RunPaths:
    """File names of every artifact inside one output directory."""

    def __init__(self, directory: PathLike):
        self.directory = Path(directory)

    def ensure(self) -> "RunPaths":
        self.directory.mkdir(parents=True, exist_ok=True)
        return self

    @property
    def users(self) -> Path:
        return self.directory / USERS_FILE

    @property
    def split(self) -> Path:
        return self.directory / SPLIT_FILE

    @property
    def propensity(self) -> Path:
        return self.directory / PROPENSITY_FILE

    def neighborhoods(self, phase: str) -> Path:
        return self.directory / f"neighborhoods_{phase}.tsv"

    def explainability(self, phase: str) -> Path:
        return self.directory / f"explainability_{phase}.tsv"

    def search(self, loss: str) -> Path:
        return self.directory / f"search_{loss}.json"

    def checkpoint(self, loss: str, replicate: int) -> Path:
        return self.directory / f"model_{loss}_r{replicate}.ckpt"

    def manifest(self, command: str, loss: Optional[str] = None) -> Path:
        suffix = f"_{loss}" if loss else ""
        return self.directory / f"manifest_{command}{suffix}.json"

    def report(self, name: str) -> Tuple[Path, Path]:
        """Text table and TSV rows for report ``name``."""
        return self.directory / f"{name}.txt", self.directory / f"{name}.tsv"
