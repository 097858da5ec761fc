"""Bradley-Terry preferences, offline dataset sampling, and JSONL persistence."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterator, NamedTuple, Sequence, Union

import numpy as np

from .bandit import Bandit, as_table, sha256_json
from .errors import DomainError, IntegrityError, ParseError

GENERATOR = "numpy.Philox"
_ONE_MINUS = np.nextafter(1.0, 0.0)
_TINY = np.finfo(float).tiny

Seed = Union[int, Sequence[int]]


def make_rng(seed: Seed) -> np.random.Generator:
    """Counter-based (Philox) generator keyed by an int or a tuple of ints."""
    if isinstance(seed, np.random.SeedSequence):
        ss = seed
    else:
        ss = np.random.SeedSequence(seed)
    return np.random.Generator(np.random.Philox(ss))


def sigmoid(z):
    """Logistic function, branch-on-sign form; never overflows."""
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out if out.ndim else float(out)


def log_sigmoid(z):
    """log sigma(z) = -softplus(-z), stable for large |z|."""
    z = np.asarray(z, dtype=float)
    out = -np.logaddexp(0.0, -z)
    return out if out.ndim else float(out)


def bt_prob(f, x: int, y1: int, y2: int) -> float:
    """P(y1 beats y2 | x) under the Bradley-Terry model with reward table ``f``."""
    f = np.asarray(f, dtype=float)
    p = sigmoid(f[x, y1] - f[x, y2])
    # keep the open-interval contract even where float64 saturates
    return float(min(max(p, _TINY), _ONE_MINUS))


class PreferenceRecord(NamedTuple):
    x: int
    y_w: int
    y_l: int


@dataclass(frozen=True, eq=False)
class PreferenceDataset:
    """Offline preference data stored column-wise.

    ``meta`` carries ``n``, ``seed``, ``generator``, ``bandit_sha`` and ``ref_sha``.
    """

    x: np.ndarray
    y_w: np.ndarray
    y_l: np.ndarray
    num_states: int
    num_actions: int
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        cols = []
        for name in ("x", "y_w", "y_l"):
            a = np.array(getattr(self, name), dtype=np.int64).reshape(-1)
            a.setflags(write=False)
            object.__setattr__(self, name, a)
            cols.append(a)
        if not (len(cols[0]) == len(cols[1]) == len(cols[2])):
            raise DomainError("dataset columns have different lengths")
        if len(self.x):
            if self.x.min() < 0 or self.x.max() >= self.num_states:
                raise DomainError("prompt index out of range")
            for a in cols[1:]:
                if a.min() < 0 or a.max() >= self.num_actions:
                    raise DomainError("response index out of range")
        meta = dict(self.meta)
        meta.setdefault("n", len(self.x))
        if meta["n"] != len(self.x):
            raise IntegrityError(f"meta says n={meta['n']} but there are {len(self.x)} records")
        object.__setattr__(self, "meta", meta)

    @classmethod
    def from_records(cls, records: Sequence, num_states: int, num_actions: int,
                     meta: dict | None = None) -> "PreferenceDataset":
        arr = np.asarray([tuple(r) for r in records], dtype=np.int64).reshape(-1, 3)
        return cls(arr[:, 0], arr[:, 1], arr[:, 2], num_states, num_actions, meta or {})

    def __len__(self) -> int:
        return len(self.x)

    @property
    def n(self) -> int:
        return len(self.x)

    @property
    def records(self) -> list[PreferenceRecord]:
        return [PreferenceRecord(int(a), int(b), int(c)) for a, b, c in zip(self.x, self.y_w, self.y_l)]

    def __iter__(self) -> Iterator[PreferenceRecord]:
        return iter(self.records)

    def __eq__(self, other):
        if not isinstance(other, PreferenceDataset):
            return NotImplemented
        return (self.num_states == other.num_states and self.num_actions == other.num_actions
                and np.array_equal(self.x, other.x) and np.array_equal(self.y_w, other.y_w)
                and np.array_equal(self.y_l, other.y_l) and self.meta == other.meta)

    def subset(self, idx) -> "PreferenceDataset":
        idx = np.asarray(idx)
        meta = {k: v for k, v in self.meta.items() if k != "n"}
        meta["parent_n"] = self.n
        return PreferenceDataset(self.x[idx], self.y_w[idx], self.y_l[idx],
                                 self.num_states, self.num_actions, meta)

    # sufficient statistics; every loss in the package only needs these

    @cached_property
    def pair_counts(self) -> np.ndarray:
        """W[x, a, b] = number of records with prompt x, winner a, loser b."""
        S, A = self.num_states, self.num_actions
        flat = (self.x * A + self.y_w) * A + self.y_l
        return np.bincount(flat, minlength=S * A * A).reshape(S, A, A).astype(float)

    @cached_property
    def triples(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Distinct (x, winner, loser) triples and their multiplicities."""
        W = self.pair_counts
        tx, ta, tb = np.nonzero(W)
        return tx, ta, tb, W[tx, ta, tb]

    @cached_property
    def prompt_counts(self) -> np.ndarray:
        return np.bincount(self.x, minlength=self.num_states).astype(float)

    def comparison_counts(self, comparison: str = "average") -> np.ndarray:
        """C[x, y] = weight of y as the comparison response y' at prompt x."""
        W = self.pair_counts
        chosen, rejected = W.sum(axis=2), W.sum(axis=1)
        if comparison == "chosen":
            return chosen
        if comparison == "rejected":
            return rejected
        if comparison == "average":
            return 0.5 * (chosen + rejected)
        raise DomainError(f"unknown comparison {comparison!r}")


def _inverse_cdf(table: np.ndarray, rows: np.ndarray, u: np.ndarray) -> np.ndarray:
    cdf = np.cumsum(table, axis=1)
    cdf[:, -1] = 1.0
    idx = (u[:, None] >= cdf[rows]).sum(axis=1)
    return np.minimum(idx, table.shape[1] - 1)


def sample_dataset(bandit: Bandit, pi_ref, n: int, seed: Seed) -> PreferenceDataset:
    """Draw ``n`` i.i.d. labelled comparisons.

    One block of ``n x 4`` uniforms is drawn up front; its columns drive, in
    order, the prompt, the first response, the second response and the label.
    The first response wins when its uniform falls below the BT probability.
    """
    if n < 0:
        raise DomainError("n must be non-negative")
    ref = as_table(pi_ref)
    if ref.shape != bandit.shape:
        raise DomainError("reference policy shape does not match the bandit")
    rng = make_rng(seed)
    u = rng.random((n, 4))
    x = _inverse_cdf(bandit.rho[None, :], np.zeros(n, dtype=np.int64), u[:, 0])
    y1 = _inverse_cdf(ref, x, u[:, 1])
    y2 = _inverse_cdf(ref, x, u[:, 2])
    p = sigmoid(bandit.r_star[x, y1] - bandit.r_star[x, y2]) if n else np.zeros(0)
    first_wins = u[:, 3] < p
    y_w = np.where(first_wins, y1, y2)
    y_l = np.where(first_wins, y2, y1)
    meta = {
        "n": int(n),
        "seed": seed if isinstance(seed, int) else [int(s) for s in seed],
        "generator": GENERATOR,
        "bandit_sha": bandit.sha(),
        "ref_sha": sha256_json(ref.tolist()),
    }
    return PreferenceDataset(x, y_w, y_l, bandit.num_states, bandit.num_actions, meta)


def meta_path(path: Union[str, Path]) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".meta.json")


def write_jsonl(dataset: PreferenceDataset, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        for x, w, l in zip(dataset.x.tolist(), dataset.y_w.tolist(), dataset.y_l.tolist()):
            fh.write(json.dumps({"x": x, "y_w": w, "y_l": l}) + "\n")
    meta = dict(dataset.meta, num_states=dataset.num_states, num_actions=dataset.num_actions)
    meta_path(path).write_text(json.dumps(meta, sort_keys=True))
    return path


def read_jsonl(path: Union[str, Path], bandit: Bandit | None = None,
               pi_ref=None) -> PreferenceDataset:
    """Load a dataset written by :func:`write_jsonl`.

    Raises ParseError (with the 1-based line number) on a malformed line and
    IntegrityError when the sidecar hashes disagree with ``bandit``/``pi_ref``.
    """
    path = Path(path)
    meta = json.loads(meta_path(path).read_text())
    rows = []
    with path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                rec = (obj["x"], obj["y_w"], obj["y_l"])
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ParseError(f"malformed record ({exc})", lineno) from None
            if not all(isinstance(v, int) and not isinstance(v, bool) for v in rec):
                raise ParseError("record fields must be integers", lineno)
            rows.append(rec)
    S, A = int(meta.pop("num_states")), int(meta.pop("num_actions"))
    if len(rows) != meta.get("n"):
        raise IntegrityError(f"sidecar declares n={meta.get('n')} but file has {len(rows)} records")
    if bandit is not None and meta.get("bandit_sha") != bandit.sha():
        raise IntegrityError("bandit hash mismatch")
    if pi_ref is not None and meta.get("ref_sha") != sha256_json(as_table(pi_ref).tolist()):
        raise IntegrityError("reference-policy hash mismatch")
    if isinstance(meta.get("seed"), list):
        meta["seed"] = [int(s) for s in meta["seed"]]
    return PreferenceDataset.from_records(rows, S, A, meta)
