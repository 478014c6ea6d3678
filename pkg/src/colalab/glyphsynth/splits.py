"""Zero-shot train/test partitions over a charset."""

from dataclasses import dataclass, field

from ..exceptions import DegenerateSplitError, InvalidArgumentError
from .grammar import document_frequency

CHARACTER_ZEROSHOT = "character_zeroshot"
COMPONENT_ZEROSHOT = "component_zeroshot"


@dataclass(frozen=True)
class SplitManifest:
    train_classes: tuple
    test_classes: tuple
    kind: str
    params: dict = field(default_factory=dict)
    generator_seed: int = 0

    def __post_init__(self):
        overlap = set(self.train_classes) & set(self.test_classes)
        if overlap:
            raise InvalidArgumentError(f"train and test share classes {sorted(overlap)[:5]}")

    @property
    def name(self):
        if self.kind == CHARACTER_ZEROSHOT:
            return f"char-{self.params['m']}-{self.params['k']}"
        return f"comp-{self.params['n']}"

    def to_json(self):
        return {
            "train_classes": list(self.train_classes),
            "test_classes": list(self.test_classes),
            "kind": self.kind,
            "params": dict(self.params),
            "generator_seed": self.generator_seed,
        }

    @classmethod
    def from_json(cls, record):
        return cls(
            tuple(record["train_classes"]),
            tuple(record["test_classes"]),
            record["kind"],
            dict(record["params"]),
            record.get("generator_seed", 0),
        )


def make_character_zeroshot_split(charset, m, k, generator_seed=0):
    """First ``m`` classes in canonical order train, last ``k`` test."""
    if m < 0 or k < 0:
        raise InvalidArgumentError("m and k must be non-negative")
    if m + k > len(charset):
        raise InvalidArgumentError(f"m + k = {m + k} exceeds charset size {len(charset)}")
    ids = [spec.class_id for spec in sorted(charset, key=lambda s: s.class_id)]
    return SplitManifest(
        tuple(ids[:m]),
        tuple(ids[len(ids) - k:]) if k else (),
        CHARACTER_ZEROSHOT,
        {"m": m, "k": k},
        generator_seed,
    )


def make_component_zeroshot_split(charset, n, generator_seed=0):
    """Classes holding any primitive used by fewer than ``n`` classes go to test.

    Frequency is the number of classes in the full charset that contain the
    primitive.
    """
    if n < 1:
        raise InvalidArgumentError(f"n must be >= 1, got {n}")
    freq = document_frequency(charset)
    rare = {p for p, c in freq.items() if c < n}
    train, test = [], []
    for spec in sorted(charset, key=lambda s: s.class_id):
        (test if rare & set(spec.component_multiset) else train).append(spec.class_id)
    if not train or not test:
        raise DegenerateSplitError(len(train), len(test), f"n={n}")
    return SplitManifest(tuple(train), tuple(test), COMPONENT_ZEROSHOT, {"n": n}, generator_seed)


def parse_split(text):
    """Parse ``char:M:K`` or ``comp:N`` into ``(kind, params)``."""
    parts = text.split(":")
    try:
        if parts[0] == "char" and len(parts) == 3:
            return CHARACTER_ZEROSHOT, {"m": int(parts[1]), "k": int(parts[2])}
        if parts[0] == "comp" and len(parts) == 2:
            return COMPONENT_ZEROSHOT, {"n": int(parts[1])}
    except ValueError:
        pass
    raise InvalidArgumentError(f"bad split spec {text!r}; use char:M:K or comp:N")


def make_split(charset, text, generator_seed=0):
    kind, params = parse_split(text)
    if kind == CHARACTER_ZEROSHOT:
        return make_character_zeroshot_split(charset, params["m"], params["k"], generator_seed)
    return make_component_zeroshot_split(charset, params["n"], generator_seed)
