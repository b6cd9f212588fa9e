"""Corpus ingestion and the seeded synthetic corpora used for desk-scale runs."""

from __future__ import annotations

import hashlib
import itertools
import json
import random
from pathlib import Path
from typing import Iterable, Iterator

from .errors import ConfigError, FormatError

FORMATS = ("lines", "json-lines")


def ingest_corpus(path: str | Path, fmt: str = "lines") -> Iterator[str]:
    """Yield documents in file order.

    ``lines``: one document per line, blank lines skipped, line terminator
    stripped. ``json-lines``: one JSON object per non-blank line, document taken
    from its ``text`` field.
    """
    if fmt not in FORMATS:
        raise ConfigError(f"unknown corpus format {fmt!r}; expected one of {', '.join(FORMATS)}")
    try:
        fh = open(path, "r", encoding="utf-8", newline="")
    except OSError as exc:
        raise FormatError(f"{path}: {exc.strerror or exc}") from exc
    with fh:
        try:
            for lineno, line in enumerate(fh, 1):
                line = line.rstrip("\r\n") if line.endswith("\n") else line
                if fmt == "lines":
                    if line.strip():
                        yield line
                    continue
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise FormatError(f"{path}: line {lineno}: invalid JSON ({exc.msg})") from exc
                if not isinstance(obj, dict) or not isinstance(obj.get("text"), str):
                    raise FormatError(f"{path}: line {lineno}: missing string field 'text'")
                yield obj["text"]
        except UnicodeDecodeError as exc:
            raise FormatError(f"{path}: not valid UTF-8 ({exc.reason})") from exc


def load_corpus(path: str | Path, fmt: str = "lines") -> list[str]:
    return list(ingest_corpus(path, fmt))


def corpus_digest(docs: Iterable[str]) -> str:
    h = hashlib.sha256()
    for doc in docs:
        data = doc.encode("utf-8")
        h.update(len(data).to_bytes(8, "little"))
        h.update(data)
    return "sha256:" + h.hexdigest()


def write_lines(docs: Iterable[str], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for doc in docs:
            fh.write(doc)
            fh.write("\n")


# -- synthetic clinical-style corpus ------------------------------------------

_MODIFIERS = (
    "Arterial Venous Non Invasive Left Right Bilateral Chronic Acute Total Free Serum "
    "Urine Peripheral Central Incentive Mean Systolic Diastolic Continuous Intermittent"
).split()
_FIXED_TERMS = (
    "Heart rate", "Respiratory rate", "O2 saturation pulseoxymetry", "Temperature Fahrenheit",
    "Non Invasive Blood Pressure systolic", "Non Invasive Blood Pressure diastolic",
    "Arterial Blood Pressure mean", "Infusion", "Nonin", "Glucose finger stick",
    "Hemoglobin", "Platelet Count", "White Blood Cells", "Creatinine", "Potassium",
    "Sodium", "Chloride", "Bicarbonate", "Anion Gap", "Lactate", "Incentive Spirometry",
    "Inspired O2 Fraction", "Tidal Volume", "PEEP set", "Richmond-RAS Scale",
    "Pain Level", "Braden Score", "GCS - Eye Opening", "GCS - Verbal Response",
    "Alarms On", "Parameters Checked", "Heart Rhythm", "Ectopy Type",
)
_UNITS = ("mmHg", "bpm", "insp/min", "%", "mg/dL", "mEq/L", "mL/hr", "mcg/kg/min", "units", "°F", "mL", "cmH2O", "#/volume")
_CATEGORIES = ("Vital sign", "Lab", "Medication", "Procedure", "Diagnosis", "Chart event", "Input event", "Output event")
_ADMISSIONS = ("EMERGENCY", "URGENT", "ELECTIVE", "OBSERVATION", "SURGICAL SAME DAY ADMISSION")
_STATUSES = ("normal", "abnormal", "pending", "stable", "decreased", "elevated")

# medical-sounding word shapes: syllables plus an optional Greco-Latin ending
_SYL_ONSETS = "b c d f g h k l m n p r s t v x z ph th ch st tr pl pr br cr gl".split()
_SYL_NUCLEI = "a e i o u y ae io ia eo ou".split()
_SYL_CODAS = ["", "", "", "n", "r", "s", "l", "x", "m", "th", "st", "ct", "ph"]
_ENDINGS = (
    "itis osis emia uria ectomy otomy ology scopy metry plasty algia penia cyte gram "
    "pathy ide ine ate ol one"
).split()

LEXICON_SEED = 1234


def _zipf_weights(n: int, s: float) -> list[float]:
    """Cumulative Zipf weights for ranks 1..n, ready for ``random.choices``."""
    return list(itertools.accumulate(1.0 / (r ** s) for r in range(1, n + 1)))


def _clinical_word(rng: random.Random) -> str:
    w = "".join(
        rng.choice(_SYL_ONSETS) + rng.choice(_SYL_NUCLEI) + rng.choice(_SYL_CODAS)
        for _ in range(rng.choice((1, 2, 2, 3)))
    )
    if rng.random() < 0.6:
        w += rng.choice(_ENDINGS)
    return w


def clinical_lexicon(size: int = 20000, seed: int = LEXICON_SEED) -> list[str]:
    """Distinct generated words in a seeded random order (rank order for the Zipf law)."""
    rng = random.Random(seed)
    words: set[str] = set()
    while len(words) < size:
        words.add(_clinical_word(rng))
    ranked = sorted(words)
    rng.shuffle(ranked)
    return ranked


def _event(rng: random.Random, term: str) -> str:
    shape = rng.random()
    if shape < 0.5:
        # each unit has its own typical range, as real measurements do
        u = rng.randrange(len(_UNITS))
        value = max(0, int(rng.gauss(20 + 7 * u, 4 + u)))
        return f"{term} {value} {_UNITS[u]}"
    if shape < 0.7:
        return f"{rng.choice(_CATEGORIES)}: {term}"
    if shape < 0.85:
        return f"{term} {rng.choice(_STATUSES)}"
    return f"{rng.randint(0, 23):02d}:{rng.choice(('00', '15', '30', '45'))} {term}"


def synthetic_clinical_corpus(
    size_bytes: int,
    seed: int = 0,
    lexicon_size: int = 20000,
    zipf_s: float = 1.2,
    max_words: int = 3,
) -> list[str]:
    """Patient-record-style documents, one per line, totalling about ``size_bytes``.

    Each document is a short header followed by 10 to 50 events. An event
    names a term of 1 to ``max_words`` words drawn from a Zipf law over the
    lexicon (occasionally with a modifier, sometimes a fixed chart label)
    and wraps it in a measurement, category, status or timestamp template.
    The lexicon itself does not depend on ``seed``.
    """
    if size_bytes < 0:
        raise ConfigError("size_bytes must be non-negative")
    if lexicon_size < 1 or max_words < 1:
        raise ConfigError("lexicon_size and max_words must be positive")
    rng = random.Random(seed)
    words = clinical_lexicon(lexicon_size)
    cum = _zipf_weights(len(words), zipf_s)
    docs: list[str] = []
    total = 0
    while total < size_bytes:
        events = []
        for _ in range(rng.randint(10, 50)):
            if rng.random() < 0.05:
                term = rng.choice(_FIXED_TERMS)
            else:
                parts = rng.choices(words, cum_weights=cum, k=rng.randint(1, max_words))
                if rng.random() < 0.2:
                    parts.insert(0, rng.choice(_MODIFIERS).lower())
                term = " ".join(parts)
                term = term[0].upper() + term[1:]
            events.append(_event(rng, term))
        head = f"Patient {rng.randint(18, 95)}y {rng.choice('MF')}, {rng.choice(_ADMISSIONS).lower()}: "
        doc = head + "; ".join(events)
        docs.append(doc)
        total += len(doc.encode("utf-8")) + 1
    return docs


# -- synthetic general-domain corpus (base tokenizer training) ---------------

_COMMON = (
    "the of and to a in is it you that he was for on are with as I his they be at one have "
    "this from or had by not word but what some we can out other were all there when up use "
    "your how said an each she which do their time if will way about many then them write "
    "would like so these her long make thing see him two has look more day could go come did "
    "number sound no most people my over know water than call first who may down side been "
    "now find any new work part take get place made live where after back little only round "
    "man year came show every good me give our under name very through just form sentence "
    "great think say help low line differ turn cause much mean before move right boy old too "
    "same tell does set three want air well also play small end put home read hand port large "
    "spell add even land here must big high such follow act why ask men change went light kind "
    "off need house picture try us again animal point mother world near build self earth father"
).split()
_ONSETS = "b c d f g h j k l m n p r s t v w z br ch cl cr dr fl gr pl pr sh st th tr".split()
_NUCLEI = "a e i o u ai ea ee oo ou".split()
_CODAS = ["", "", "n", "r", "s", "t", "l", "nd", "st", "ck", "ng", "m"]


def _pseudo_word(rng: random.Random) -> str:
    return "".join(
        rng.choice(_ONSETS) + rng.choice(_NUCLEI) + rng.choice(_CODAS)
        for _ in range(rng.choice((1, 1, 2, 2, 2, 3)))
    )


def synthetic_general_corpus(size_bytes: int, seed: int = 0, n_words: int = 30000) -> list[str]:
    rng = random.Random(seed ^ 0x5EED)
    vocab = list(_COMMON)
    seen = set(vocab)
    while len(vocab) < n_words:
        w = _pseudo_word(rng)
        if w not in seen:
            seen.add(w)
            vocab.append(w)
    cum = _zipf_weights(len(vocab), 1.0)
    docs: list[str] = []
    total = 0
    while total < size_bytes:
        sentences = []
        for _ in range(rng.randint(3, 8)):
            words = rng.choices(vocab, cum_weights=cum, k=rng.randint(5, 18))
            words[0] = words[0].capitalize()
            if rng.random() < 0.3:
                words.insert(rng.randrange(len(words)), str(rng.randint(0, 2000)))
            sentences.append(" ".join(words) + rng.choice((".", ".", ".", "?", "!", ",")))
        doc = " ".join(sentences)
        docs.append(doc)
        total += len(doc.encode("utf-8")) + 1
    return docs
