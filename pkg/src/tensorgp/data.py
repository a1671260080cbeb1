"""File formats, ingestion and the synthetic tensor-normal generator.

Formats
-------
Design points
    Comma-delimited text, one point per row, ``d`` columns. Blank lines and
    lines starting with ``#`` are ignored.
Tensors
    First line ``# shape: m1,m2,...,mk``; then the entries in row-major
    order, one line per fibre of the last mode (comma-delimited).
Manifest / truth
    JSON. Paths in a manifest are relative to the manifest's directory.

Floats are written with ``repr`` so that a write/read round trip is exact.
"""
from dataclasses import dataclass, field
import hashlib
import json
from pathlib import Path

import numpy as np

from .covariance import DEFAULT_JITTER, SpdFactor, sigma3_from_factor, sqe_kernel
from .exceptions import DataFormatError
from .model import CovParams, TrainingSet, param_names
from .tensor import DenseTensor
from .covariance import unwhiten

MANIFEST_SCHEMA = "tensorgp.manifest/1"
TRUTH_SCHEMA = "tensorgp.truth/1"


def file_digest(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _parse_rows(path):
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                row = [float(tok) for tok in line.split(",")]
            except ValueError as exc:
                raise DataFormatError(f"{path}:{lineno}: cannot parse row ({exc})") from None
            if not all(np.isfinite(row)):
                raise DataFormatError(f"{path}:{lineno}: non-finite value")
            rows.append((lineno, row))
    return rows


def read_design(path, d=None):
    """Read an ``(n, d)`` design table."""
    rows = _parse_rows(path)
    if not rows:
        raise DataFormatError(f"{path}: no design points")
    width = d if d is not None else len(rows[0][1])
    for lineno, row in rows:
        if len(row) != width:
            raise DataFormatError(f"{path}:{lineno}: expected {width} columns, found {len(row)}")
    return np.array([row for _, row in rows], dtype=float)


def read_tensor(path):
    with open(path) as fh:
        header = fh.readline().strip()
    if not header.startswith("#") or "shape:" not in header:
        raise DataFormatError(f"{path}:1: missing '# shape: m1,...,mk' header")
    try:
        shape = tuple(int(tok) for tok in header.split("shape:", 1)[1].split(","))
    except ValueError:
        raise DataFormatError(f"{path}:1: malformed shape header {header!r}") from None
    if not shape or any(m < 1 for m in shape):
        raise DataFormatError(f"{path}:1: invalid shape {shape}")
    rows = _parse_rows(path)
    for lineno, row in rows:
        if len(row) != shape[-1]:
            raise DataFormatError(f"{path}:{lineno}: expected {shape[-1]} entries, found {len(row)}")
    values = np.array([v for _, row in rows for v in row], dtype=float)
    expected = int(np.prod(shape))
    if values.size != expected:
        raise DataFormatError(f"{path}: shape {shape} needs {expected} entries, found {values.size}")
    return DenseTensor(values.reshape(shape))


def write_design(path, design):
    design = np.atleast_2d(np.asarray(design, dtype=float))
    with open(path, "w") as fh:
        for row in design:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def write_tensor(path, t):
    arr = np.asarray(t.data if isinstance(t, DenseTensor) else t, dtype=float)
    with open(path, "w") as fh:
        fh.write("# shape: " + ",".join(str(m) for m in arr.shape) + "\n")
        for row in arr.reshape(-1, arr.shape[-1]):
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


@dataclass
class Manifest:
    """Locations and declared shape of a data set."""

    design_path: Path
    data_path: Path
    shape: tuple
    d: int
    test_path: Path | None = None
    s_test: tuple | None = None
    digests: dict = field(default_factory=dict)

    @classmethod
    def read(cls, path):
        path = Path(path)
        try:
            raw = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"{path}: invalid JSON ({exc})") from None
        base = path.parent
        try:
            return cls(
                design_path=base / raw["design_path"],
                data_path=base / raw["data_path"],
                shape=tuple(int(m) for m in raw["shape"]),
                d=int(raw["d"]),
                test_path=base / raw["test_path"] if raw.get("test_path") else None,
                s_test=tuple(raw["s_test"]) if raw.get("s_test") is not None else None,
                digests=dict(raw.get("digests", {})),
            )
        except KeyError as exc:
            raise DataFormatError(f"{path}: manifest lacks field {exc}") from None

    def write(self, path):
        path = Path(path)
        base = path.parent

        def rel(p):
            return str(Path(p).relative_to(base)) if Path(p).is_absolute() else str(p)

        raw = {
            "schema": MANIFEST_SCHEMA,
            "design_path": rel(self.design_path),
            "data_path": rel(self.data_path),
            "shape": list(self.shape),
            "d": self.d,
            "test_path": rel(self.test_path) if self.test_path else None,
            "s_test": list(self.s_test) if self.s_test is not None else None,
            "digests": self.digests,
        }
        path.write_text(json.dumps(raw, indent=2, sort_keys=True) + "\n")


def load_training(manifest):
    """Read and validate the training set named by ``manifest``.

    Raises
    ------
    DataFormatError
        On malformed rows, non-finite values or a shape mismatch.
    """
    if not isinstance(manifest, Manifest):
        manifest = Manifest.read(manifest)
    design = read_design(manifest.design_path, manifest.d)
    data = read_tensor(manifest.data_path)
    if data.shape != tuple(manifest.shape):
        raise DataFormatError(f"{manifest.data_path}: tensor shape {data.shape} != declared {tuple(manifest.shape)}")
    if design.shape[0] != manifest.shape[0]:
        raise DataFormatError(
            f"{manifest.design_path}: {design.shape[0]} design points but declared n={manifest.shape[0]}"
        )
    h = hashlib.sha256()
    for p in (manifest.design_path, manifest.data_path):
        h.update(Path(p).read_bytes())
    return TrainingSet(design, data, digest=h.hexdigest())


def load_test_slice(manifest):
    """Test observation of shape ``(m2, ..., mk)``; ``None`` if not declared."""
    if not isinstance(manifest, Manifest):
        manifest = Manifest.read(manifest)
    if manifest.test_path is None:
        return None
    t = read_tensor(manifest.test_path)
    slice_shape = tuple(manifest.shape[1:])
    if t.shape not in (slice_shape, (1,) + slice_shape):
        raise DataFormatError(f"{manifest.test_path}: test slice shape {t.shape} does not match {slice_shape}")
    return DenseTensor(t.data.reshape(slice_shape))


def save_training(out_dir, design, data, test_slice=None, s_test=None, name="manifest.json"):
    """Write design, tensor (and test slice) plus a manifest; returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    data = data if isinstance(data, DenseTensor) else DenseTensor(data)
    write_design(out / "design.csv", design)
    write_tensor(out / "data.txt", data)
    test_path = None
    if test_slice is not None:
        test_path = out / "test.txt"
        arr = np.asarray(test_slice.data if isinstance(test_slice, DenseTensor) else test_slice)
        write_tensor(test_path, arr.reshape((1,) + data.shape[1:]))
    paths = [out / "design.csv", out / "data.txt"] + ([test_path] if test_path else [])
    manifest = Manifest(
        design_path=out / "design.csv",
        data_path=out / "data.txt",
        shape=tuple(data.shape),
        d=int(np.atleast_2d(design).shape[1]),
        test_path=test_path,
        s_test=tuple(float(v) for v in s_test) if s_test is not None else None,
        digests={p.name: file_digest(p) for p in paths},
    )
    manifest.write(out / name)
    return out / name


def sample_tensor_normal(mean, factors, rng):
    """``mean + Z ×_1 L_1 ×_2 ... ×_k L_k`` with ``Z`` i.i.d. standard normal."""
    mean = mean if isinstance(mean, DenseTensor) else DenseTensor(mean)
    z = rng.standard_normal(mean.shape)
    return DenseTensor(mean.data + unwhiten(z, factors).data)


@dataclass
class SyntheticSpec:
    """Recipe for a synthetic benchmark.

    Parameters
    ----------
    shape : tuple
        ``(n, m2, 2)`` training shape.
    params : CovParams
        True ``q1``, ``q2`` and ``A3``.
    design_box : (lower, upper)
        Design points are uniform in this box.
    star_box : (lower, upper)
        Per-star mean velocities are uniform in this box; they also serve
        as the true SQE inputs of ``Sigma2``.
    s_test : sequence, optional
        True test design point; drawn uniformly from the central 80% of
        ``design_box`` when omitted.
    seed : int
    misspecified : bool
        Build ``Sigma1`` from an exponential kernel ``exp(-sqrt(dQd))``
        instead of the SQE kernel.
    with_test : bool
    jitter : float
    """

    shape: tuple
    params: CovParams
    design_box: tuple = ((0.0, 0.0), (1.0, 1.0))
    star_box: tuple = ((0.0, 0.0), (10.0, 10.0))
    s_test: tuple | None = None
    seed: int = 0
    misspecified: bool = False
    with_test: bool = True
    jitter: float = DEFAULT_JITTER


def _exponential_kernel(points, q, jitter):
    diff = points[:, None, :] - points[None, :, :]
    k = np.exp(-np.sqrt(np.einsum("ijl,l->ij", diff * diff, np.asarray(q))))
    k[np.diag_indices_from(k)] += jitter
    return SpdFactor.from_matrix(k)


def generate(spec):
    """Draw a synthetic data set in memory.

    Returns a dict with ``design``, ``data`` (training tensor), ``test``
    (slice or ``None``), ``s_test``, ``star_means`` and ``factors``.
    """
    n, m2, m3 = spec.shape
    d = len(spec.params.q1)
    rng = np.random.default_rng(spec.seed)
    lo, hi = (np.asarray(b, dtype=float) for b in spec.design_box)
    design = rng.uniform(lo, hi, size=(n, d))
    if spec.s_test is not None:
        s_test = np.asarray(spec.s_test, dtype=float)
    else:
        s_test = rng.uniform(lo + 0.1 * (hi - lo), hi - 0.1 * (hi - lo))
    slo, shi = (np.asarray(b, dtype=float) for b in spec.star_box)
    star_means = rng.uniform(slo, shi, size=(m2, m3))
    points = np.vstack([design, s_test[None, :]]) if spec.with_test else design
    if spec.misspecified:
        s1 = _exponential_kernel(points, spec.params.q1, spec.jitter)
    else:
        s1 = sqe_kernel(points, spec.params.q1, spec.jitter)
    s2 = sqe_kernel(star_means, spec.params.q2, spec.jitter)
    s3 = sigma3_from_factor(spec.params.a3)
    mean = np.broadcast_to(star_means[None], (points.shape[0], m2, m3))
    v = sample_tensor_normal(mean, [s1, s2, s3], rng).data
    return {
        "design": design,
        "data": DenseTensor(v[:n]),
        "test": DenseTensor(v[n]) if spec.with_test else None,
        "s_test": s_test if spec.with_test else None,
        "star_means": star_means,
        "factors": [s1, s2, s3],
    }


def make_benchmark(spec, out_dir):
    """Write a synthetic benchmark to ``out_dir``.

    Files: ``design.csv``, ``data.txt``, ``test.txt`` (if ``with_test``),
    ``manifest.json`` and ``truth.json``. Output is byte-identical for a
    fixed spec.

    Returns
    -------
    manifest_path : Path
    truth : dict
    """
    out = Path(out_dir)
    g = generate(spec)
    manifest_path = save_training(out, g["design"], g["data"], g["test"], g["s_test"])
    truth_params = CovParams(spec.params.q1, spec.params.q2, spec.params.a3, g["s_test"])
    d = len(spec.params.q1)
    truth = {
        "schema": TRUTH_SCHEMA,
        "shape": list(spec.shape),
        "seed": spec.seed,
        "misspecified": spec.misspecified,
        "names": param_names(d, 2, spec.with_test),
        "values": [float(v) for v in (truth_params if spec.with_test else spec.params).to_vector()],
        "sigma3": g["factors"][2].matrix.tolist(),
        "s_test": [float(v) for v in g["s_test"]] if spec.with_test else None,
        "star_means": g["star_means"].tolist(),
        "design_box": [list(map(float, b)) for b in spec.design_box],
        "star_box": [list(map(float, b)) for b in spec.star_box],
    }
    (out / "truth.json").write_text(json.dumps(truth, indent=2, sort_keys=True) + "\n")
    return manifest_path, truth
