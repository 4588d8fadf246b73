import itertools
import logging
import re
import warnings
from dataclasses import dataclass
from typing import Dict, FrozenSet, Iterable, List, Sequence, Set, Tuple

import numpy as np

from doeflow.common.checks import ConstantColumn, UnsupportedFamily
from doeflow.common.matrix_utils import constant_columns, correlated_pairs
from doeflow.design_gen.design import FACTOR_LETTERS, Design
from doeflow.spec_model.schema import DesignFamily

logger = logging.getLogger(__name__)

# Multiplying two words cancels shared letters (A * A = I), so a word is a set of letters.
Word = FrozenSet[str]

IDENTITY = "I"


def word_product(a: Word, b: Word) -> Word:
    return a.symmetric_difference(b)


def word_label(word: Iterable[str], order: Sequence[str]) -> str:
    letters = sorted(word, key=order.index)
    if not letters:
        return IDENTITY
    if all(len(name) == 1 for name in order):
        return "".join(letters)
    return ":".join(letters)


def defining_relation(
    generator_words: Sequence[Tuple[int, Word]]
) -> List[Tuple[int, Word]]:
    """All products of subsets of the signed generator words, the identity included."""
    group: List[Tuple[int, Word]] = []
    for r in range(len(generator_words) + 1):
        for subset in itertools.combinations(generator_words, r):
            sign, word = 1, frozenset()  # type: Tuple[int, Word]
            for generator_sign, generator_word in subset:
                sign *= generator_sign
                word = word_product(word, generator_word)
            group.append((sign, word))
    return group


def _key_terms(names: Sequence[str]) -> List[Tuple[str, ...]]:
    return [(name,) for name in names] + list(itertools.combinations(names, 2))


def alias_structure(design: Design) -> Dict[str, Set[str]]:
    """For every main effect and two-factor interaction, the terms whose coded columns equal its
    own up to sign.

    Fractional factorials are resolved by multiplying the term with every word of the defining
    relation, so the alias chains contain terms of any order. Other two-level designs
    (full factorials, Plackett-Burman, two-level orthogonal arrays) are resolved by comparing
    column products of up to three factors.

    # Raises

    `UnsupportedFamily` for designs that are not two-level.
    """
    names = design.factor_names
    if not design.is_two_level:
        raise UnsupportedFamily(
            f"Alias structure needs a two-level design, got {design.family.value} with codings "
            f"{sorted({c.value for c in design.coding})}"
        )
    aliases: Dict[str, Set[str]] = {}
    if design.family == DesignFamily.FRACTIONAL_FACTORIAL and design.metadata.defining_relation:
        # Defining words are spelled in generator letters; letter i names column i.
        words = [
            frozenset(names[FACTOR_LETTERS.index(letter)] for letter in word.lstrip("-"))
            for word in design.metadata.defining_relation
            if word.lstrip("-") != IDENTITY
        ]
        for term in _key_terms(names):
            term_word = frozenset(term)
            chain = set()
            for word in words:
                product = word_product(term_word, word)
                if product:
                    chain.add(word_label(product, names))
            aliases[word_label(term, names)] = chain
        return aliases

    candidates = [
        combo for r in range(1, min(3, design.k) + 1) for combo in itertools.combinations(names, r)
    ]
    columns = {combo: _product_column(design, combo) for combo in candidates}
    for term in _key_terms(names):
        column = columns[term]
        aliases[word_label(term, names)] = {
            word_label(other, names)
            for other in candidates
            if other != term and abs(float(np.dot(column, columns[other]))) == design.n_runs
        }
    return aliases


def _product_column(design: Design, factors: Sequence[str]) -> np.ndarray:
    column = np.ones(design.n_runs)
    for name in factors:
        column = column * design.column(name)
    return column


_POWER = re.compile(r"^(?P<name>.+?)\^(?P<degree>[0-9]+)$")


def parse_term(term: str, names: Sequence[str]) -> List[Tuple[str, int]]:
    """Splits a term into `(factor, power)` pairs. Accepts `A`, `A:B`, `A^2`, `A:B^2` and, when
    every factor name is one character, concatenated letters such as `BC`."""
    parts = term.split(":") if ":" in term else [term]
    if len(parts) == 1 and term not in names and not _POWER.match(term):
        if all(len(name) == 1 for name in names) and all(letter in names for letter in term):
            parts = list(term)
    factors = []
    for part in parts:
        match = _POWER.match(part)
        name, degree = (match.group("name"), int(match.group("degree"))) if match else (part, 1)
        if name not in names:
            raise ValueError(f"Term {term!r} references unknown factor {name!r}")
        factors.append((name, degree))
    return factors


def term_column(design: Design, term: str) -> np.ndarray:
    column = np.ones(design.n_runs)
    for name, degree in parse_term(term, design.factor_names):
        column = column * design.column(name) ** degree
    return column


@dataclass(frozen=True)
class ConfoundingPair:
    term_a: str
    term_b: str
    correlation: float


def detect_confounding(
    design: Design, model_terms: Sequence[str], threshold: float = 0.999
) -> List[ConfoundingPair]:
    """Pairs of model terms whose columns have absolute Pearson correlation of at least
    `threshold`. Terms with a constant column cannot be correlated with anything; they are
    reported with a `ConstantColumn` warning and skipped.
    """
    matrix = np.column_stack([term_column(design, term) for term in model_terms])
    for index in constant_columns(matrix):
        message = f"Term {model_terms[index]!r} has a constant column in this design"
        logger.warning(message)
        warnings.warn(message, ConstantColumn)
    return [
        ConfoundingPair(a, b, r) for a, b, r in correlated_pairs(matrix, model_terms, threshold)
    ]


def default_model_terms(names: Sequence[str]) -> List[str]:
    """Main effects and two-factor interactions."""
    return [word_label(term, names) for term in _key_terms(names)]
