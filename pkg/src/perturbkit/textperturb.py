"""The 12 textual perturbation channels and the textual difficulty metric.

Difficulty is the disturbance percentage: corrupted character count divided
by the task text length in characters. Character counting is
tokenizer-independent, so identical inputs always measure identically.

Every operator edits only the task region of the rendered prompt (injection
payloads attach at fixed template positions) and returns the exact span
ledger of what was inserted or replaced, so difficulty never has to be
re-inferred by string alignment.
"""

from __future__ import annotations

import random
import string
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional, Union

from .core import (
    PROMPT_PREFIX,
    PROMPT_SUFFIX,
    DifficultyReport,
    Instruction,
    PerturbationChannel,
    PerturbationSpec,
    PerturbedInstruction,
    Span,
    SPAN_INSERTED,
    SPAN_REPLACED,
    channel,
    text_report,
)
from .errors import ConfigurationError, InvalidInputError, PayloadNotFoundError

# Lowercase and uppercase ASCII letters mapped to visually similar single
# characters. Letters only: digits and the delimiters "?", ":", "\n" are
# never eligible for substitution.
DEFAULT_HOMOGLYPHS: dict[str, str] = {
    "a": "å", "b": "Ь", "c": "ϲ", "d": "ԁ", "e": "е", "f": "ƒ", "g": "ɡ",
    "h": "һ", "i": "і", "j": "ϳ", "k": "κ", "l": "ⅼ", "m": "ṃ", "n": "ո",
    "o": "ò", "p": "р", "q": "ԛ", "r": "ⲅ", "s": "ѕ", "t": "ț", "u": "ս",
    "v": "ѵ", "w": "ԝ", "x": "х", "y": "у", "z": "ᴢ",
    "A": "Α", "B": "Β", "C": "Ϲ", "D": "Ꭰ", "E": "Ε", "F": "Ϝ", "G": "Ԍ",
    "H": "Η", "I": "Ι", "J": "Ј", "K": "Κ", "L": "Ꮮ", "M": "Μ", "N": "Ν",
    "O": "Ο", "P": "Ρ", "Q": "Ԛ", "R": "Ꭱ", "S": "Ѕ", "T": "Τ", "U": "Ս",
    "V": "Ѵ", "W": "Ԝ", "X": "Χ", "Y": "Υ", "Z": "Ζ",
}

DEFAULT_GIBBERISH_ALPHABET = string.ascii_letters + string.digits

# Three-character disturbance runs: repeated symbols plus abnormal whitespace.
SYMBOL_RUNS = ("!!!", "???", "///", "...", "___", "   ")

DEFAULT_PAYLOAD_IDS = {
    "prefix": "prefix_injection",
    "suffix": "suffix_injection",
    "role_spoof": "role_spoof",
}


class PayloadLibrary:
    """Named payload strings, distractor corpora, and drift dictionaries.

    Loads from a directory of UTF-8 files: every *.txt file becomes a payload
    (or line-per-passage corpus) keyed by its stem, every *.tsv file a
    tab-separated key-to-value dictionary keyed by its stem.
    """

    def __init__(
        self,
        payloads: dict[str, str],
        dictionaries: dict[str, list[tuple[str, str]]],
        homoglyphs: Optional[dict[str, str]] = None,
        gibberish_alphabet: str = DEFAULT_GIBBERISH_ALPHABET,
    ):
        self.payloads = dict(payloads)
        self.dictionaries = {k: list(v) for k, v in dictionaries.items()}
        self.homoglyphs = dict(DEFAULT_HOMOGLYPHS if homoglyphs is None else homoglyphs)
        self.gibberish_alphabet = gibberish_alphabet
        for ch, sub in self.homoglyphs.items():
            if not ch.isalpha():
                raise ConfigurationError(
                    f"homoglyph table maps only letters, found {ch!r}"
                )
            if ch in "?:\n" or sub in "?:\n":
                raise ConfigurationError("homoglyph table must not touch delimiters")

    @classmethod
    def from_dir(cls, path: Union[str, Path]) -> "PayloadLibrary":
        path = Path(path)
        if not path.is_dir():
            raise ConfigurationError(f"payload directory not found: {path}")
        payloads: dict[str, str] = {}
        dictionaries: dict[str, list[tuple[str, str]]] = {}
        for file in sorted(path.iterdir()):
            if file.suffix == ".txt":
                text = file.read_text(encoding="utf-8")
                payloads[file.stem] = text[:-1] if text.endswith("\n") else text
            elif file.suffix == ".tsv":
                entries = []
                for lineno, line in enumerate(
                    file.read_text(encoding="utf-8").splitlines(), 1
                ):
                    if not line.strip():
                        continue
                    if "\t" not in line:
                        raise ConfigurationError(
                            f"{file.name}:{lineno}: expected key<TAB>value"
                        )
                    key, value = line.split("\t", 1)
                    entries.append((key, value))
                dictionaries[file.stem] = entries
        return cls(payloads, dictionaries)

    @classmethod
    def default(cls) -> "PayloadLibrary":
        data_dir = resources.files("perturbkit") / "payloads"
        return cls.from_dir(Path(str(data_dir)))

    def payload(self, payload_id: str) -> str:
        if payload_id not in self.payloads:
            raise PayloadNotFoundError(f"unknown payload_id: {payload_id!r}")
        return self.payloads[payload_id]

    def corpus(self, corpus_id: str) -> list[str]:
        passages = [line for line in self.payload(corpus_id).splitlines() if line.strip()]
        if not passages:
            raise ConfigurationError(f"corpus {corpus_id!r} is empty")
        return passages

    def drift_dictionary(self, kind: str) -> list[tuple[str, str]]:
        for key in (f"drift_{kind}", kind):
            if key in self.dictionaries:
                return self.dictionaries[key]
        raise ConfigurationError(f"no drift dictionary for kind {kind!r}")


@dataclass(frozen=True)
class GibberishParams:
    """position: prefix or suffix; ratio: inserted chars per task char, in [0, 1.5]."""

    position: str
    ratio: float

    def __post_init__(self) -> None:
        if self.position not in ("prefix", "suffix"):
            raise InvalidInputError(f"gibberish position must be prefix|suffix, got {self.position!r}")
        if not 0.0 <= self.ratio <= 1.5:
            raise InvalidInputError(f"gibberish ratio must lie in [0, 1.5], got {self.ratio}")


@dataclass(frozen=True)
class UnicodeParams:
    """rate: fraction of eligible letters replaced, in [0, 0.5]."""

    rate: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.rate <= 0.5:
            raise InvalidInputError(f"unicode rate must lie in [0, 0.5], got {self.rate}")


@dataclass(frozen=True)
class SymbolsParams:
    """density: insertion-site density in [0, 1]; sites = max(1, round(4 * density))."""

    density: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.density <= 1.0:
            raise InvalidInputError(f"symbols density must lie in [0, 1], got {self.density}")


TextParams = Union[GibberishParams, UnicodeParams, SymbolsParams]

_PARAM_TYPES = {
    "gibberish": GibberishParams,
    "unicode": UnicodeParams,
    "symbols": SymbolsParams,
}


def _task_bounds(instr: Instruction) -> tuple[int, int]:
    start = len(PROMPT_PREFIX)
    return start, start + len(instr.task_text)


def _insert(instr: Instruction, position: int, inserted: str, ch: PerturbationChannel) -> PerturbedInstruction:
    text = instr.rendered[:position] + inserted + instr.rendered[position:]
    span = Span(position, position + len(inserted), SPAN_INSERTED)
    return PerturbedInstruction(base=instr, text=text, corrupted_spans=(span,), channel=ch)


def apply_injection(
    instr: Instruction,
    position: str,
    payload_id: Optional[str] = None,
    library: Optional[PayloadLibrary] = None,
) -> PerturbedInstruction:
    """Insert an adversarial payload at a structural template position.

    suffix attaches after the task question mark, prefix and role_spoof
    before the question. Structural: no severity, no difficulty gating.
    """
    if position not in ("prefix", "suffix", "role_spoof"):
        raise InvalidInputError(f"injection position must be prefix|suffix|role_spoof, got {position!r}")
    library = library or PayloadLibrary.default()
    payload = library.payload(payload_id or DEFAULT_PAYLOAD_IDS[position])
    ch = channel("adversarial_injection", position)
    if position == "suffix":
        question_mark = len(instr.rendered) - len(PROMPT_SUFFIX)
        return _insert(instr, question_mark + 1, " " + payload, ch)
    return _insert(instr, len("In: "), payload + " ", ch)


def _pseudo_words(total: int, rng: random.Random, alphabet: str) -> str:
    """Space-separated pseudo-words of length 4-9, exactly `total` characters."""
    if total <= 0:
        return ""
    words: list[str] = []
    used = 0
    while used < total:
        sep = 1 if words else 0
        room = total - used - sep
        if room < 1:
            words[-1] += "".join(rng.choice(alphabet) for _ in range(total - used))
            break
        length = min(rng.randint(4, 9), room)
        words.append("".join(rng.choice(alphabet) for _ in range(length)))
        used += sep + length
    return " ".join(words)


def _noop(instr: Instruction, ch: PerturbationChannel) -> PerturbedInstruction:
    return PerturbedInstruction(base=instr, text=instr.rendered, corrupted_spans=(), channel=ch, noop=True)


def apply_corruption(
    instr: Instruction,
    kind: str,
    params: TextParams,
    seed: int,
    library: Optional[PayloadLibrary] = None,
) -> tuple[PerturbedInstruction, DifficultyReport]:
    """Apply a linguistic corruption (gibberish, unicode, symbols) deterministically.

    Corruption counts are rounded from the requested ratio/rate, so a
    request that rounds to zero characters returns the input unchanged.
    """
    if kind not in _PARAM_TYPES:
        raise InvalidInputError(f"corruption kind must be gibberish|unicode|symbols, got {kind!r}")
    if not isinstance(params, _PARAM_TYPES[kind]):
        raise InvalidInputError(
            f"params for {kind} must be {_PARAM_TYPES[kind].__name__}, got {type(params).__name__}"
        )
    library = library or PayloadLibrary.default()
    rng = random.Random(seed)
    task = instr.task_text
    task_start, task_end = _task_bounds(instr)

    if kind == "gibberish":
        ch = channel("linguistic_corruption", f"gibberish_{params.position}")
        n_insert = round(params.ratio * len(task))
        requested = min(1.0, params.ratio)
        if n_insert == 0:
            return _noop(instr, ch), text_report(0, len(task), requested)
        body = _pseudo_words(n_insert - 1, rng, library.gibberish_alphabet)
        if params.position == "suffix":
            perturbed = _insert(instr, task_end, " " + body, ch)
        else:
            perturbed = _insert(instr, task_start, body + " ", ch)
        return perturbed, text_report(n_insert, len(task), requested)

    if kind == "unicode":
        ch = channel("linguistic_corruption", "unicode")
        eligible = [
            i for i in range(task_start, task_end) if instr.rendered[i] in library.homoglyphs
        ]
        n_replace = round(params.rate * len(eligible))
        if n_replace == 0:
            return _noop(instr, ch), text_report(0, len(task), params.rate)
        chosen = sorted(rng.sample(eligible, n_replace))
        chars = list(instr.rendered)
        for i in chosen:
            chars[i] = library.homoglyphs[chars[i]]
        spans = tuple(Span(i, i + 1, SPAN_REPLACED) for i in chosen)
        perturbed = PerturbedInstruction(
            base=instr, text="".join(chars), corrupted_spans=spans, channel=ch
        )
        return perturbed, text_report(n_replace, len(task), params.rate)

    # abnormal symbols
    ch = channel("linguistic_corruption", "symbols")
    sites = max(1, round(4 * params.density))
    sites = min(sites, len(task) + 1)
    positions = sorted(rng.sample(range(len(task) + 1), sites))
    runs = [rng.choice(SYMBOL_RUNS) for _ in positions]
    text = instr.rendered
    spans = []
    offset = 0
    for pos, run in zip(positions, runs):
        at = task_start + pos + offset
        text = text[:at] + run + text[at:]
        spans.append(Span(at, at + len(run), SPAN_INSERTED))
        offset += len(run)
    perturbed = PerturbedInstruction(
        base=instr, text=text, corrupted_spans=tuple(spans), channel=ch
    )
    n_corr = sum(len(r) for r in runs)
    return perturbed, text_report(n_corr, len(task), min(1.0, params.density))


def apply_drift(
    instr: Instruction,
    kind: str,
    library: Optional[PayloadLibrary] = None,
) -> PerturbedInstruction:
    """Substitute spatial or object expressions via the drift dictionary.

    Longest-match, left-to-right, word-boundary substitution over the task
    text only. No dictionary hit is a flagged no-op, not an error.
    """
    if kind not in ("spatial", "object"):
        raise InvalidInputError(f"drift kind must be spatial|object, got {kind!r}")
    library = library or PayloadLibrary.default()
    entries = dict(library.drift_dictionary(kind))
    ch = channel("semantics_drift", kind)
    task = instr.task_text
    keys = sorted(entries, key=len, reverse=True)

    def _is_word_char(c: str) -> bool:
        return c.isalnum() or c == "_"

    pieces: list[str] = []
    spans: list[Span] = []
    task_start = len(PROMPT_PREFIX)
    out_len = task_start  # running position in the output text
    i = 0
    while i < len(task):
        match = None
        if i == 0 or not _is_word_char(task[i - 1]):
            for key in keys:
                end = i + len(key)
                if task.startswith(key, i) and (end == len(task) or not _is_word_char(task[end])):
                    match = key
                    break
        if match is None:
            pieces.append(task[i])
            out_len += 1
            i += 1
        else:
            replacement = entries[match]
            pieces.append(replacement)
            spans.append(Span(out_len, out_len + len(replacement), SPAN_REPLACED))
            out_len += len(replacement)
            i += len(match)
    if not spans:
        return _noop(instr, ch)
    new_task = "".join(pieces)
    text = PROMPT_PREFIX + new_task + PROMPT_SUFFIX
    return PerturbedInstruction(base=instr, text=text, corrupted_spans=tuple(spans), channel=ch)


def apply_distractor(
    instr: Instruction,
    kind: str,
    seed: int,
    library: Optional[PayloadLibrary] = None,
) -> tuple[PerturbedInstruction, DifficultyReport]:
    """Inject coherent but task-irrelevant content.

    Object/background passages are selected from the shipped corpora by
    seed (index = seed mod corpus size) and prepended before the question;
    paraphrase repeats the full question sentence verbatim after itself.
    """
    if kind not in ("irrelevant_object", "environment_background", "paraphrase"):
        raise InvalidInputError(
            f"distractor kind must be irrelevant_object|environment_background|paraphrase, got {kind!r}"
        )
    library = library or PayloadLibrary.default()
    ch = channel("contextual_distractors", kind)
    task = instr.task_text
    if kind == "paraphrase":
        # verbatim duplication by default; a "paraphrase_variants" payload
        # (one "{task}"-templated line per variant) switches to seeded variants
        if "paraphrase_variants" in library.payloads:
            variants = library.corpus("paraphrase_variants")
            question = variants[seed % len(variants)].format(task=task)
        else:
            question = PROMPT_PREFIX[len("In: "):] + task + "?"
        question_mark = len(instr.rendered) - len(PROMPT_SUFFIX)
        perturbed = _insert(instr, question_mark + 1, " " + question, ch)
    else:
        passages = library.corpus(kind)
        passage = passages[seed % len(passages)]
        perturbed = _insert(instr, len("In: "), passage + " ", ch)
    return perturbed, text_report(perturbed.corrupted_char_count, len(task))


def text_difficulty(perturbed: PerturbedInstruction) -> DifficultyReport:
    """Disturbance percentage: corrupted characters over task text length."""
    return text_report(perturbed.corrupted_char_count, len(perturbed.base.task_text))


def severity_params(ch: PerturbationChannel, severity: float) -> Optional[TextParams]:
    """Map a curriculum severity in [0, 1] to concrete operator parameters.

    Gibberish and symbols take the severity directly; the unicode rate scales
    onto its admissible [0, 0.5] range. Channels that are not
    severity-parameterized (injection, drift, distractors) return None.
    """
    if ch.family == "linguistic_corruption":
        if ch.kind.startswith("gibberish_"):
            return GibberishParams(position=ch.kind.removeprefix("gibberish_"), ratio=severity)
        if ch.kind == "unicode":
            return UnicodeParams(rate=0.5 * severity)
        return SymbolsParams(density=severity)
    return None


def apply_spec(
    instr: Instruction,
    spec: PerturbationSpec,
    library: Optional[PayloadLibrary] = None,
) -> tuple[PerturbedInstruction, DifficultyReport]:
    """Apply any textual PerturbationSpec and measure its difficulty."""
    ch = spec.channel
    if ch.modality != "textual":
        raise InvalidInputError(f"apply_spec requires a textual channel, got {ch}")
    library = library or PayloadLibrary.default()
    if ch.family == "adversarial_injection":
        payload_id = (spec.params or {}).get("payload_id")
        perturbed = apply_injection(instr, ch.kind, payload_id, library)
        return perturbed, text_difficulty(perturbed)
    if ch.family == "linguistic_corruption":
        kind = "gibberish" if ch.kind.startswith("gibberish_") else ch.kind
        if spec.params:
            given = dict(spec.params)
            if kind == "gibberish":
                params: TextParams = GibberishParams(
                    position=ch.kind.removeprefix("gibberish_"), ratio=float(given["ratio"])
                )
            elif kind == "unicode":
                params = UnicodeParams(rate=float(given["rate"]))
            else:
                params = SymbolsParams(density=float(given["density"]))
        else:
            if spec.severity is None:
                raise InvalidInputError(f"{ch} needs a severity or explicit params")
            params = severity_params(ch, spec.severity)
        return apply_corruption(instr, kind, params, spec.seed, library)
    if ch.family == "semantics_drift":
        perturbed = apply_drift(instr, ch.kind, library)
        return perturbed, text_difficulty(perturbed)
    return apply_distractor(instr, ch.kind, spec.seed, library)
