"""Embedding stores, splits, negative sampling, batches, synthetic data.

The on-disk store is a single little-endian binary file:

    magic "FDTI", version u32 = 1,
    n_drugs u32, n_prots u32, d_drug u32, d_prot u32, n_records u64,
    label_kind u8 (0 none, 1 real, 2 binary),
    flags u8 (bit 0: split tags present), 6 reserved zero bytes,
    drug id table: n_drugs x (u16 byte length + UTF-8 bytes), prot ids next,
    drug_matrix n_drugs*d_drug float32 row-major, prot_matrix likewise,
    records n_records x {drug_idx u32, prot_idx u32, label f32 (NaN when
    absent), split u8 (0 train / 1 val / 2 test), 3 reserved zero bytes}.

Loading validates everything up front (magic, bounds, finiteness, duplicate
pairs); parse failures carry byte offsets, semantic failures carry record
ordinals. Stores are immutable after load and safe to share across threads;
samplers own their RNG streams.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, replace
from typing import Iterator, NamedTuple

import numpy as np

from .errors import (
    DataError,
    LookupError_,
    ParameterError,
    SamplingError,
    StoreFormatError,
    StoreValidationError,
)

logger = logging.getLogger(__name__)

MAGIC = b"FDTI"
FORMAT_VERSION = 1
HEADER_SIZE = 4 + 4 + 4 * 4 + 8 + 1 + 1 + 6

LABEL_NONE, LABEL_REAL, LABEL_BINARY = 0, 1, 2
SPLIT_TRAIN, SPLIT_VAL, SPLIT_TEST = 0, 1, 2
SPLIT_NAMES = ("train", "val", "test")

RECORD_DTYPE = np.dtype(
    [("drug", "<u4"), ("prot", "<u4"), ("label", "<f4"), ("split", "u1"),
     ("pad", "u1", (3,))]
)

# Rejection-sampling budget: bounds worst-case work on dense interaction
# matrices while keeping failure explicit rather than silent.
RETRY_FACTOR = 100


class Record(NamedTuple):
    drug_idx: int
    prot_idx: int
    label: float | None
    split: int


@dataclass(frozen=True)
class EmbeddingStore:
    """Immutable embedding corpus plus interaction records."""

    drug_ids: tuple
    prot_ids: tuple
    drug_matrix: np.ndarray  # (n_drugs, d_drug) float32
    prot_matrix: np.ndarray  # (n_prots, d_prot) float32
    rec_drug: np.ndarray  # (n,) int64
    rec_prot: np.ndarray  # (n,) int64
    rec_label: np.ndarray  # (n,) float32, NaN where absent
    rec_split: np.ndarray  # (n,) uint8
    label_kind: int
    has_splits: bool

    @property
    def n_drugs(self) -> int:
        return self.drug_matrix.shape[0]

    @property
    def n_prots(self) -> int:
        return self.prot_matrix.shape[0]

    @property
    def d_drug(self) -> int:
        return self.drug_matrix.shape[1]

    @property
    def d_prot(self) -> int:
        return self.prot_matrix.shape[1]

    @property
    def n_records(self) -> int:
        return self.rec_drug.shape[0]

    @property
    def records(self) -> Iterator[Record]:
        for i in range(self.n_records):
            label = float(self.rec_label[i])
            yield Record(int(self.rec_drug[i]), int(self.rec_prot[i]),
                         None if np.isnan(label) else label,
                         int(self.rec_split[i]))

    def drug_index(self, drug_id: str) -> int:
        try:
            return self.drug_ids.index(drug_id)
        except ValueError:
            raise LookupError_(f"unknown drug id {drug_id!r}") from None

    def prot_index(self, prot_id: str) -> int:
        try:
            return self.prot_ids.index(prot_id)
        except ValueError:
            raise LookupError_(f"unknown protein id {prot_id!r}") from None

    def split_record_indices(self, split: int) -> np.ndarray:
        return np.flatnonzero(self.rec_split == split)

    def interaction_set(self) -> set:
        """All recorded (drug_idx, prot_idx) pairs, across every split."""
        return set(zip(self.rec_drug.tolist(), self.rec_prot.tolist()))


def make_store(
    drug_ids,
    prot_ids,
    drug_matrix,
    prot_matrix,
    rec_drug,
    rec_prot,
    rec_label,
    rec_split,
    label_kind: int,
    has_splits: bool,
) -> EmbeddingStore:
    """Assemble and validate a store from parts."""
    store = EmbeddingStore(
        drug_ids=tuple(drug_ids),
        prot_ids=tuple(prot_ids),
        drug_matrix=np.ascontiguousarray(drug_matrix, dtype=np.float32),
        prot_matrix=np.ascontiguousarray(prot_matrix, dtype=np.float32),
        rec_drug=np.asarray(rec_drug, dtype=np.int64),
        rec_prot=np.asarray(rec_prot, dtype=np.int64),
        rec_label=np.asarray(rec_label, dtype=np.float32),
        rec_split=np.asarray(rec_split, dtype=np.uint8),
        label_kind=int(label_kind),
        has_splits=bool(has_splits),
    )
    validate_store(store)
    return store


def validate_store(store: EmbeddingStore) -> None:
    """Enforce every structural invariant; raises StoreValidationError."""
    if store.label_kind not in (LABEL_NONE, LABEL_REAL, LABEL_BINARY):
        raise StoreValidationError(f"label_kind {store.label_kind} not in 0..2")
    if len(store.drug_ids) != store.n_drugs:
        raise StoreValidationError("drug id table length != n_drugs")
    if len(store.prot_ids) != store.n_prots:
        raise StoreValidationError("prot id table length != n_prots")
    for name, mat in (("drug", store.drug_matrix), ("prot", store.prot_matrix)):
        if not np.all(np.isfinite(mat)):
            bad = int(np.flatnonzero(~np.isfinite(mat).all(axis=1))[0])
            raise StoreValidationError(
                f"non-finite {name} embedding at row {bad}"
            )
    n = store.n_records
    for arr in (store.rec_prot, store.rec_label, store.rec_split):
        if arr.shape[0] != n:
            raise StoreValidationError("record arrays disagree in length")
    if n == 0:
        return
    bad = np.flatnonzero(
        (store.rec_drug < 0) | (store.rec_drug >= store.n_drugs)
    )
    if bad.size:
        i = int(bad[0])
        raise StoreValidationError(
            f"record {i}: drug_idx {int(store.rec_drug[i])} out of range "
            f"[0, {store.n_drugs})"
        )
    bad = np.flatnonzero(
        (store.rec_prot < 0) | (store.rec_prot >= store.n_prots)
    )
    if bad.size:
        i = int(bad[0])
        raise StoreValidationError(
            f"record {i}: prot_idx {int(store.rec_prot[i])} out of range "
            f"[0, {store.n_prots})"
        )
    bad = np.flatnonzero(store.rec_split > SPLIT_TEST)
    if bad.size:
        i = int(bad[0])
        raise StoreValidationError(
            f"record {i}: split {int(store.rec_split[i])} not in 0..2"
        )
    if np.any(np.isinf(store.rec_label)):
        i = int(np.flatnonzero(np.isinf(store.rec_label))[0])
        raise StoreValidationError(f"record {i}: infinite label")
    present = ~np.isnan(store.rec_label)
    if store.label_kind == LABEL_NONE and np.any(present):
        i = int(np.flatnonzero(present)[0])
        raise StoreValidationError(
            f"record {i}: label present but label_kind is none"
        )
    if store.label_kind == LABEL_BINARY:
        vals = store.rec_label[present]
        if not np.all((vals == 0.0) | (vals == 1.0)):
            i = int(np.flatnonzero(present)[0])
            raise StoreValidationError(
                f"binary store contains a non 0/1 label (first labeled "
                f"record {i})"
            )
    triples = np.stack(
        [store.rec_split.astype(np.int64), store.rec_drug, store.rec_prot],
        axis=1,
    )
    if np.unique(triples, axis=0).shape[0] != n:
        raise StoreValidationError(
            "duplicate (drug_idx, prot_idx) pair within a split"
        )


class _Reader:
    """Byte cursor that reports the offset of whatever failed."""

    def __init__(self, buf: bytes, path: str):
        self.buf = buf
        self.pos = 0
        self.path = path

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.buf):
            raise StoreFormatError(
                f"{self.path}: truncated while reading {what} at byte "
                f"{self.pos} (need {n}, have {len(self.buf) - self.pos})"
            )
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def u16(self, what: str) -> int:
        return struct.unpack("<H", self.take(2, what))[0]

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]

    def u64(self, what: str) -> int:
        return struct.unpack("<Q", self.take(8, what))[0]

    def u8(self, what: str) -> int:
        return self.take(1, what)[0]


def load_store(path: str) -> EmbeddingStore:
    """Read and fully validate a store file."""
    try:
        with open(path, "rb") as fh:
            buf = fh.read()
    except OSError as exc:
        raise DataError(f"cannot read store {path}: {exc}") from exc

    r = _Reader(buf, str(path))
    magic = r.take(4, "magic")
    if magic != MAGIC:
        raise StoreFormatError(
            f"{path}: bad magic {magic!r} at byte 0 (expected {MAGIC!r})"
        )
    version = r.u32("version")
    if version != FORMAT_VERSION:
        raise StoreFormatError(
            f"{path}: unsupported version {version} at byte 4"
        )
    n_drugs = r.u32("n_drugs")
    n_prots = r.u32("n_prots")
    d_drug = r.u32("d_drug")
    d_prot = r.u32("d_prot")
    n_records = r.u64("n_records")
    label_kind = r.u8("label_kind")
    flags = r.u8("flags")
    reserved = r.take(6, "reserved header bytes")
    if reserved != b"\x00" * 6:
        raise StoreFormatError(
            f"{path}: nonzero reserved header bytes at byte {r.pos - 6}"
        )

    def read_ids(count: int, what: str):
        ids = []
        for i in range(count):
            length = r.u16(f"{what} id length {i}")
            raw = r.take(length, f"{what} id {i}")
            try:
                ids.append(raw.decode("utf-8"))
            except UnicodeDecodeError as exc:
                raise StoreFormatError(
                    f"{path}: invalid UTF-8 in {what} id {i} at byte "
                    f"{r.pos - length}"
                ) from exc
        return ids

    drug_ids = read_ids(n_drugs, "drug")
    prot_ids = read_ids(n_prots, "prot")

    def read_matrix(rows: int, cols: int, what: str):
        nbytes = rows * cols * 4
        raw = r.take(nbytes, f"{what} matrix")
        return np.frombuffer(raw, dtype="<f4").reshape(rows, cols).copy()

    drug_matrix = read_matrix(n_drugs, d_drug, "drug")
    prot_matrix = read_matrix(n_prots, d_prot, "prot")

    raw = r.take(n_records * RECORD_DTYPE.itemsize, "records")
    recs = np.frombuffer(raw, dtype=RECORD_DTYPE)
    if r.pos != len(buf):
        raise StoreFormatError(
            f"{path}: {len(buf) - r.pos} trailing bytes after records at "
            f"byte {r.pos}"
        )

    try:
        return make_store(
            drug_ids, prot_ids, drug_matrix, prot_matrix,
            recs["drug"].astype(np.int64), recs["prot"].astype(np.int64),
            recs["label"].copy(), recs["split"].copy(),
            label_kind, bool(flags & 1),
        )
    except StoreValidationError as exc:
        raise StoreValidationError(f"{path}: {exc}") from None


def save_store(store: EmbeddingStore, path: str) -> None:
    """Write the store in the binary format; inverse of load_store."""
    validate_store(store)
    out = bytearray()
    out += MAGIC
    out += struct.pack(
        "<IIIIIQBB6x",
        FORMAT_VERSION,
        store.n_drugs,
        store.n_prots,
        store.d_drug,
        store.d_prot,
        store.n_records,
        store.label_kind,
        1 if store.has_splits else 0,
    )
    for kind, ids in (("drug", store.drug_ids), ("prot", store.prot_ids)):
        for i, ident in enumerate(ids):
            try:
                raw = ident.encode("utf-8")
            except UnicodeEncodeError as exc:
                raise DataError(
                    f"{kind} id {i} ({ident!r}) is not encodable as UTF-8"
                ) from exc
            if len(raw) > 0xFFFF:
                raise DataError(f"{kind} id {i} exceeds 65535 UTF-8 bytes")
            out += struct.pack("<H", len(raw)) + raw
    out += np.ascontiguousarray(store.drug_matrix, dtype="<f4").tobytes()
    out += np.ascontiguousarray(store.prot_matrix, dtype="<f4").tobytes()
    recs = np.zeros(store.n_records, dtype=RECORD_DTYPE)
    recs["drug"] = store.rec_drug
    recs["prot"] = store.rec_prot
    recs["label"] = store.rec_label
    recs["split"] = store.rec_split if store.has_splits else 0
    out += recs.tobytes()
    try:
        with open(path, "wb") as fh:
            fh.write(out)
    except OSError as exc:
        raise DataError(f"cannot write store {path}: {exc}") from exc


def store_file_size(store: EmbeddingStore) -> int:
    """Exact byte length save_store will produce."""
    ids = sum(2 + len(s.encode("utf-8"))
              for s in store.drug_ids + store.prot_ids)
    matrices = 4 * (store.n_drugs * store.d_drug
                    + store.n_prots * store.d_prot)
    return HEADER_SIZE + ids + matrices + 16 * store.n_records


def assign_splits(
    store: EmbeddingStore,
    seed: int,
    fractions: tuple = (0.7, 0.1, 0.2),
) -> EmbeddingStore:
    """Seeded random record split into train/val/test by the given fractions."""
    if len(fractions) != 3 or abs(sum(fractions) - 1.0) > 1e-9:
        raise ParameterError(f"split fractions must sum to 1, got {fractions}")
    n = store.n_records
    if n == 0:
        raise DataError("cannot split an empty record set")
    rng = np.random.default_rng([seed, 7041020])
    order = rng.permutation(n)
    n_train = int(n * fractions[0])
    n_val = int(n * (fractions[0] + fractions[1])) - n_train
    splits = np.empty(n, dtype=np.uint8)
    splits[order[:n_train]] = SPLIT_TRAIN
    splits[order[n_train : n_train + n_val]] = SPLIT_VAL
    splits[order[n_train + n_val :]] = SPLIT_TEST
    new = replace(store, rec_split=splits, has_splits=True)
    validate_store(new)
    return new


def binarize_labels(
    store: EmbeddingStore,
    threshold: float = 30.0,
    positive_below: bool = True,
) -> EmbeddingStore:
    """Threshold real labels into {0, 1} (affinity-measure style: lower
    measured value means a binder by default). NaN labels stay absent."""
    if store.label_kind != LABEL_REAL:
        raise DataError("binarize_labels requires a real-labeled store")
    labels = store.rec_label.astype(np.float64)
    present = ~np.isnan(labels)
    if positive_below:
        binary = (labels < threshold).astype(np.float32)
    else:
        binary = (labels > threshold).astype(np.float32)
    binary[~present] = np.nan
    new = replace(store, rec_label=binary, label_kind=LABEL_BINARY)
    validate_store(new)
    return new


# ---------------------------------------------------------------------------
# Negative sampling and batch construction
# ---------------------------------------------------------------------------


def sample_negatives(store: EmbeddingStore, seed: int, ratio: float = 1.0):
    """Uniform random (drug, prot) pairs absent from the interaction set.

    Count is ratio times the number of positive records. Distinct pairs;
    rejection sampling capped at RETRY_FACTOR times the requested count.
    """
    if ratio <= 0:
        raise ParameterError(f"negative ratio must be > 0, got {ratio}")
    if store.n_records == 0:
        raise DataError("cannot sample negatives for an empty interaction set")
    if store.label_kind == LABEL_BINARY:
        n_pos = int(np.sum(store.rec_label == 1.0))
    else:
        n_pos = int(np.sum(~np.isnan(store.rec_label)))
    if n_pos == 0:
        raise DataError("store has no positive records to mirror")
    wanted = int(round(ratio * n_pos))
    interactions = store.interaction_set()
    rng = np.random.default_rng([seed, 424242])
    chosen: list = []
    seen = set()
    budget = RETRY_FACTOR * wanted
    tries = 0
    while len(chosen) < wanted:
        if tries >= budget:
            raise SamplingError(
                f"negative sampling exhausted {budget} tries with only "
                f"{len(chosen)}/{wanted} pairs; interaction matrix too dense"
            )
        tries += 1
        d = int(rng.integers(store.n_drugs))
        p = int(rng.integers(store.n_prots))
        if (d, p) in interactions or (d, p) in seen:
            continue
        seen.add((d, p))
        label = 0.0 if store.label_kind == LABEL_BINARY else None
        chosen.append(Record(d, p, label, SPLIT_TRAIN))
    return chosen


def extend_with_negatives(
    store: EmbeddingStore, seed: int, ratio: float = 1.0
) -> EmbeddingStore:
    """Append sampled negative records (label 0) to a binary store."""
    negatives = sample_negatives(store, seed, ratio)
    rec_drug = np.concatenate(
        [store.rec_drug, np.array([r.drug_idx for r in negatives], dtype=np.int64)]
    )
    rec_prot = np.concatenate(
        [store.rec_prot, np.array([r.prot_idx for r in negatives], dtype=np.int64)]
    )
    labels = np.array(
        [np.nan if r.label is None else r.label for r in negatives],
        dtype=np.float32,
    )
    rec_label = np.concatenate([store.rec_label, labels])
    rec_split = np.concatenate(
        [store.rec_split,
         np.array([r.split for r in negatives], dtype=np.uint8)]
    )
    new = replace(store, rec_drug=rec_drug, rec_prot=rec_prot,
                  rec_label=rec_label, rec_split=rec_split)
    validate_store(new)
    return new


@dataclass
class TripletBatch:
    """One optimizer step's worth of data.

    The labeled pairs feed the regression/classification term; each positive
    pair also contributes a (protein anchor, positive drug, negative drug)
    triplet whose negative was resampled for this epoch.
    """

    pair_drug: np.ndarray  # (n,) int64
    pair_prot: np.ndarray
    pair_label: np.ndarray  # (n,) float64
    trip_anchor_prot: np.ndarray  # (m,) int64
    trip_pos_drug: np.ndarray
    trip_neg_drug: np.ndarray

    @property
    def n_pairs(self) -> int:
        return self.pair_drug.shape[0]

    @property
    def n_triplets(self) -> int:
        return self.trip_anchor_prot.shape[0]


def split_code(split) -> int:
    if isinstance(split, str):
        try:
            return SPLIT_NAMES.index(split)
        except ValueError:
            raise ParameterError(
                f"unknown split {split!r}; use one of {SPLIT_NAMES}"
            ) from None
    if split in (SPLIT_TRAIN, SPLIT_VAL, SPLIT_TEST):
        return int(split)
    raise ParameterError(f"unknown split code {split!r}")


def make_batches(
    store: EmbeddingStore,
    split,
    batch_size: int,
    seed: int,
    epoch: int,
):
    """Shuffled batches for one epoch; a pure function of its arguments.

    The RNG stream is derived from (seed, epoch, split), so any epoch can be
    regenerated independently: resuming at epoch k reproduces exactly the
    batches an uninterrupted run would have seen. Negative drugs are drawn
    per positive record from the split's own drug pool, rejecting known
    interactions, with a capped retry budget per record.
    """
    if batch_size < 1:
        raise ParameterError(f"batch_size must be >= 1, got {batch_size}")
    code = split_code(split)
    idx = store.split_record_indices(code)
    idx = idx[~np.isnan(store.rec_label[idx])]
    if idx.size == 0:
        raise DataError(f"split {SPLIT_NAMES[code]!r} has no labeled records")

    rng = np.random.default_rng([seed, epoch, code])
    order = idx[rng.permutation(idx.size)]
    interactions = store.interaction_set()
    pool = np.unique(store.rec_drug[idx])

    skipped = 0
    batches = []
    for start in range(0, order.size, batch_size):
        chunk = order[start : start + batch_size]
        labels = store.rec_label[chunk].astype(np.float64)
        drugs = store.rec_drug[chunk]
        prots = store.rec_prot[chunk]
        if store.label_kind == LABEL_BINARY:
            positive = labels == 1.0
        else:
            positive = np.ones(chunk.size, dtype=bool)
        anchors, pos_drugs, neg_drugs = [], [], []
        for d, p in zip(drugs[positive].tolist(), prots[positive].tolist()):
            neg = -1
            for _ in range(RETRY_FACTOR):
                cand = int(pool[rng.integers(pool.size)])
                if (cand, p) not in interactions:
                    neg = cand
                    break
            if neg < 0:
                skipped += 1
                continue
            anchors.append(p)
            pos_drugs.append(d)
            neg_drugs.append(neg)
        batches.append(
            TripletBatch(
                pair_drug=drugs,
                pair_prot=prots,
                pair_label=labels,
                trip_anchor_prot=np.array(anchors, dtype=np.int64),
                trip_pos_drug=np.array(pos_drugs, dtype=np.int64),
                trip_neg_drug=np.array(neg_drugs, dtype=np.int64),
            )
        )
    if skipped:
        logger.warning(
            "epoch %d split %s: %d triplet(s) skipped, protein anchors had "
            "no non-interacting drug in the pool", epoch, SPLIT_NAMES[code],
            skipped,
        )
    return batches


# ---------------------------------------------------------------------------
# Synthetic planted-geometry generator
# ---------------------------------------------------------------------------


@dataclass
class SyntheticConfig:
    """Desk-scale generator with a planted latent geometry.

    Entities get unit latent vectors; the true affinity of a pair is an
    affine function of the cosine distance between the drug latent, scaled
    elementwise by a hidden per-protein modulation, and the protein latent:

        m_j = 1 + mod_strength * (M t_j)
        y_ij = affine_a - affine_b * cos_dist(m_j * x_i, t_j) + noise * eps

    The modulation is affine in the protein latent, so a conditioning head
    can express it while an unconditioned one cannot. Embeddings lift the
    latents through random orthonormal maps plus isotropic noise. Recorded
    pairs are biased toward the closest fraction of each protein's drugs
    (interaction_quantile), mirroring the fact that measured pairs in real
    assays are mostly binders; unrecorded pairs therefore sit farther away,
    which is what gives the triplet term true signal. domain_shift reserves
    a slice of drugs for the test split and blends their latents toward a
    random rotation, emulating a temporal split's novel-compound regime.
    """

    n_drugs: int = 120
    n_prots: int = 30
    d_drug: int = 32
    d_prot: int = 48
    d_latent: int = 8
    records_per_prot: int = 40
    interaction_quantile: float = 0.5
    noise: float = 0.05
    emb_noise: float = 0.01
    mod_strength: float = 0.0
    domain_shift: bool = False
    shift_strength: float = 0.5
    affine_a: float = 6.0
    affine_b: float = 2.5
    test_drug_fraction: float = 0.25
    test_records_per_prot: int = 10
    val_fraction: float = 0.125

    def validate(self) -> None:
        if self.noise < 0 or self.emb_noise < 0:
            raise ParameterError("noise levels must be nonnegative")
        if not 0 < self.interaction_quantile <= 1:
            raise ParameterError("interaction_quantile must lie in (0, 1]")
        if self.d_latent < 2:
            raise ParameterError("d_latent must be >= 2")
        if min(self.n_drugs, self.n_prots, self.d_drug, self.d_prot) < 1:
            raise ParameterError("entity counts and dims must be positive")
        if self.d_latent > min(self.d_drug, self.d_prot):
            raise ParameterError("d_latent cannot exceed embedding dims")
        if not 0 <= self.shift_strength <= 1:
            raise ParameterError("shift_strength must lie in [0, 1]")


@dataclass
class PlantedTruth:
    """The generator's hidden state, for oracle evaluation in tests."""

    drug_latents: np.ndarray  # (n_drugs, d_latent), unit rows, post-shift
    prot_latents: np.ndarray  # (n_prots, d_latent), unit rows
    modulations: np.ndarray  # (n_prots, d_latent)
    affine_a: float
    affine_b: float

    def distances(self, with_modulation: bool = True) -> np.ndarray:
        """(n_prots, n_drugs) planted cosine distances."""
        X, T = self.drug_latents, self.prot_latents
        if with_modulation:
            A = self.modulations[:, None, :] * X[None, :, :]
        else:
            A = np.broadcast_to(X[None, :, :],
                                (T.shape[0],) + X.shape).copy()
        dots = np.einsum("pdk,pk->pd", A, T)
        norms = np.linalg.norm(A, axis=2) * np.linalg.norm(T, axis=1)[:, None]
        return np.clip(1.0 - dots / norms, 0.0, 2.0)

    def oracle_predictions(self, rec_drug, rec_prot,
                           with_modulation: bool = True) -> np.ndarray:
        D = self.distances(with_modulation)
        return self.affine_a - self.affine_b * D[rec_prot, rec_drug]


def _unit_rows(rng, n, d):
    x = rng.normal(size=(n, d))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def _orthonormal_lift(rng, d_out, d_in):
    q, _ = np.linalg.qr(rng.normal(size=(d_out, d_in)))
    return q


def generate_synthetic_with_truth(
    config: SyntheticConfig, seed: int
) -> tuple:
    """Build a synthetic store and return it with its planted truth."""
    config.validate()
    cfg = config
    rng = np.random.default_rng([seed, 5150])

    X = _unit_rows(rng, cfg.n_drugs, cfg.d_latent)
    T = _unit_rows(rng, cfg.n_prots, cfg.d_latent)

    n_test_drugs = int(round(cfg.test_drug_fraction * cfg.n_drugs))
    test_drugs = np.arange(cfg.n_drugs - n_test_drugs, cfg.n_drugs)
    if cfg.domain_shift and n_test_drugs:
        Q = _orthonormal_lift(rng, cfg.d_latent, cfg.d_latent)
        shifted = (1.0 - cfg.shift_strength) * X[test_drugs] \
            + cfg.shift_strength * (X[test_drugs] @ Q.T)
        X[test_drugs] = shifted / np.linalg.norm(shifted, axis=1,
                                                 keepdims=True)

    M = rng.normal(size=(cfg.d_latent, cfg.d_latent)) / np.sqrt(cfg.d_latent)
    mods = 1.0 + cfg.mod_strength * (T @ M.T)

    truth = PlantedTruth(
        drug_latents=X, prot_latents=T, modulations=mods,
        affine_a=cfg.affine_a, affine_b=cfg.affine_b,
    )
    D = truth.distances(with_modulation=True)

    if cfg.domain_shift and n_test_drugs:
        train_pool = np.arange(cfg.n_drugs - n_test_drugs)
        test_pool = test_drugs
    else:
        train_pool = np.arange(cfg.n_drugs)
        test_pool = np.array([], dtype=np.int64)

    def pick(pool: np.ndarray, row: np.ndarray, count: int) -> np.ndarray:
        if pool.size == 0 or count == 0:
            return np.array([], dtype=np.int64)
        thr = np.quantile(row[pool], cfg.interaction_quantile)
        close = pool[row[pool] <= thr]
        count = min(count, close.size)
        return np.sort(rng.choice(close, size=count, replace=False))

    rec_drug, rec_prot, rec_split = [], [], []
    for j in range(cfg.n_prots):
        era_drugs = pick(train_pool, D[j], cfg.records_per_prot)
        n_val = int(round(cfg.val_fraction * era_drugs.size))
        val_set = set(
            rng.choice(era_drugs, size=n_val, replace=False).tolist()
        ) if n_val else set()
        for d in era_drugs.tolist():
            rec_drug.append(d)
            rec_prot.append(j)
            rec_split.append(SPLIT_VAL if d in val_set else SPLIT_TRAIN)
        if cfg.domain_shift:
            for d in pick(test_pool, D[j], cfg.test_records_per_prot).tolist():
                rec_drug.append(d)
                rec_prot.append(j)
                rec_split.append(SPLIT_TEST)

    rec_drug = np.array(rec_drug, dtype=np.int64)
    rec_prot = np.array(rec_prot, dtype=np.int64)
    rec_split = np.array(rec_split, dtype=np.uint8)
    if not cfg.domain_shift:
        # no reserved era; carve a random 20% of records into the test split
        n = rec_drug.size
        order = rng.permutation(n)
        n_test = int(round(0.2 * n))
        rec_split[order[:n_test]] = SPLIT_TEST

    y = cfg.affine_a - cfg.affine_b * D[rec_prot, rec_drug]
    if cfg.noise > 0:
        y = y + cfg.noise * rng.normal(size=y.shape)

    R_d = _orthonormal_lift(rng, cfg.d_drug, cfg.d_latent)
    R_t = _orthonormal_lift(rng, cfg.d_prot, cfg.d_latent)
    drug_matrix = X @ R_d.T
    prot_matrix = T @ R_t.T
    if cfg.emb_noise > 0:
        drug_matrix = drug_matrix + cfg.emb_noise * rng.normal(
            size=drug_matrix.shape)
        prot_matrix = prot_matrix + cfg.emb_noise * rng.normal(
            size=prot_matrix.shape)

    store = make_store(
        drug_ids=[f"DRUG{i:05d}" for i in range(cfg.n_drugs)],
        prot_ids=[f"PROT{j:05d}" for j in range(cfg.n_prots)],
        drug_matrix=drug_matrix,
        prot_matrix=prot_matrix,
        rec_drug=rec_drug,
        rec_prot=rec_prot,
        rec_label=y.astype(np.float32),
        rec_split=rec_split,
        label_kind=LABEL_REAL,
        has_splits=True,
    )
    return store, truth


def generate_synthetic(config: SyntheticConfig, seed: int) -> EmbeddingStore:
    store, _ = generate_synthetic_with_truth(config, seed)
    return store
