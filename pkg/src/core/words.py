"""
Free group words on the 2k-regular Cayley tree.
Exact word metric, Gromov products, axes and annular sets.
"""

import logging
from itertools import islice
from typing import Iterable, Iterator, List, Optional, Sequence, Tuple, Union

from src.core.models import AnnularSet, Axis, ConcatLedger, Letter, Word

logger = logging.getLogger(__name__)

EMPTY: Word = ()


# Letters and serialization
def letter_code(letter: Union[Letter, int]) -> int:
    if isinstance(letter, Letter):
        if letter.sign not in (1, -1):
            raise ValueError(f"Invalid sign {letter.sign}")
        return letter.sign * (letter.generator_index + 1)
    return int(letter)


def code_letter(code: int) -> Letter:
    return Letter(generator_index=abs(code) - 1, sign=1 if code > 0 else -1)


def alphabet(rank: int) -> List[int]:
    """Letter codes in enumeration order: a, A, b, B, ..."""
    if rank < 1:
        raise ValueError(f"Rank must be positive, got {rank}")
    codes = []
    for i in range(1, rank + 1):
        codes.extend((i, -i))
    return codes


def parse(text: str) -> Word:
    """Parse an ASCII word ("aBba") and freely reduce it. Uppercase is inverse."""
    codes = []
    for ch in text.strip():
        if not ch.isalpha() or not ch.isascii():
            raise ValueError(f"Invalid letter '{ch}' in word '{text}'")
        index = ord(ch.lower()) - ord("a") + 1
        codes.append(-index if ch.isupper() else index)
    return reduce(codes)


def format_word(word: Sequence[int]) -> str:
    chars = []
    for code in word:
        ch = chr(ord("a") + abs(code) - 1)
        chars.append(ch.upper() if code < 0 else ch)
    return "".join(chars)


# Group operations
def reduce(letters: Iterable[Union[Letter, int]]) -> Word:
    """Freely reduce a letter sequence."""
    stack: List[int] = []
    for letter in letters:
        code = letter_code(letter)
        if code == 0:
            raise ValueError("Letter code 0 is not a generator")
        if stack and stack[-1] == -code:
            stack.pop()
        else:
            stack.append(code)
    return tuple(stack)


def is_reduced(word: Sequence[int]) -> bool:
    return all(word[i] != -word[i + 1] for i in range(len(word) - 1))


def inverse(word: Sequence[int]) -> Word:
    return tuple(-c for c in reversed(word))


def multiply(*words: Sequence[int]) -> Word:
    joined: List[int] = []
    for word in words:
        joined.extend(word)
    return reduce(joined)


def power(word: Sequence[int], n: int) -> Word:
    if n < 0:
        return power(inverse(word), -n)
    return reduce(tuple(word) * n)


def gromov_product(u: Sequence[int], v: Sequence[int]) -> int:
    """Gromov product at the identity: the common prefix length in the tree."""
    n = 0
    for x, y in zip(u, v):
        if x != y:
            break
        n += 1
    return n


def distance(u: Sequence[int], v: Sequence[int]) -> int:
    return len(multiply(inverse(u), v))


def cancellation(u: Sequence[int], v: Sequence[int]) -> int:
    """Number of letters cancelled on each side when forming u.v."""
    return gromov_product(inverse(u), v)


def concat_ledger(pieces: Sequence[Sequence[int]]) -> ConcatLedger:
    """Reduce a concatenation and record the cancellation at every junction.

    The product is cascade free when each inner piece keeps at least one letter
    after both neighbours cancel into it (end pieces may be used up by their
    single junction); then |word| = sum - 2 * sum(cancellations).
    """
    pieces = [tuple(p) for p in pieces if len(p) > 0]
    cancellations = [
        cancellation(pieces[i], pieces[i + 1]) for i in range(len(pieces) - 1)
    ]
    cascade_free = True
    for i, piece in enumerate(pieces):
        left = cancellations[i - 1] if i > 0 else 0
        right = cancellations[i] if i < len(cancellations) else 0
        inner = 0 < i < len(pieces) - 1
        if (left + right >= len(piece)) if inner else (left + right > len(piece)):
            cascade_free = False
    word = multiply(*pieces)
    if cascade_free:
        expected = sum(len(p) for p in pieces) - 2 * sum(cancellations)
        cascade_free = expected == len(word)
    return ConcatLedger(word=word, cancellations=cancellations, cascade_free=cascade_free)


# Axes and projections
def is_cyclically_reduced(word: Sequence[int]) -> bool:
    return len(word) > 0 and is_reduced(word) and word[0] != -word[-1]


def axis_of(word: Sequence[int]) -> Axis:
    word = tuple(word)
    if not word:
        raise ValueError("identity has no axis")
    i = 0
    while word[i] == -word[len(word) - 1 - i]:
        i += 1
    return Axis(conjugator=word[:i], cyclic_core=word[i : len(word) - i])


def primitive_root(word: Sequence[int]) -> Word:
    """Shortest r with word = r^m (as letter strings)."""
    word = tuple(word)
    n = len(word)
    for p in range(1, n + 1):
        if n % p == 0 and word[:p] * (n // p) == word:
            return word[:p]
    return word


def _rotations(word: Word) -> Iterator[Word]:
    for i in range(len(word)):
        yield word[i:] + word[:i]


def independent(w1: Sequence[int], w2: Sequence[int]) -> bool:
    """True iff the cyclic cores generate non-commensurable cyclic groups.

    Primitive roots of the cores are compared up to rotation and inversion,
    which decides commensurability up to conjugacy exactly.
    """
    if not w1 or not w2:
        raise ValueError("identity has no axis")
    r1 = primitive_root(axis_of(w1).cyclic_core)
    r2 = primitive_root(axis_of(w2).cyclic_core)
    if len(r1) != len(r2):
        return True
    r1_inv = inverse(r1)
    return not any(rot == r1 or rot == r1_inv for rot in _rotations(r2))


def axis_position(axis: Axis, point: Sequence[int]) -> int:
    """Signed coordinate of the nearest-point projection of a vertex onto the axis line.

    The line passes through conjugator.o; positive coordinates run along the core.
    """
    shifted = multiply(inverse(axis.conjugator), point)
    core = axis.cyclic_core
    reps = len(shifted) // len(core) + 1
    forward = gromov_product(shifted, core * reps)
    if forward > 0:
        return forward
    return -gromov_product(shifted, inverse(core) * reps)


def projection_diameter(axis: Axis, segment: Tuple[Sequence[int], Sequence[int]]) -> int:
    """Diameter of the projection of the geodesic [x.o, y.o] onto the axis line."""
    x, y = segment
    return abs(axis_position(axis, x) - axis_position(axis, y))


# Enumeration
def sphere_size(rank: int, n: int) -> int:
    if n == 0:
        return 1
    return 2 * rank * (2 * rank - 1) ** (n - 1)


def ball_size(rank: int, radius: int) -> int:
    return sum(sphere_size(rank, n) for n in range(radius + 1))


def iter_words(
    rank: int, length: int, prefix: Word = EMPTY, first_letters: Optional[Sequence[int]] = None
) -> Iterator[Word]:
    """Reduced words of exactly `length` letters extending `prefix`, lexicographic in letter order."""
    letters = alphabet(rank)
    if len(prefix) >= length:
        if len(prefix) == length:
            yield tuple(prefix)
        return
    stack: List[Word] = [tuple(prefix)]
    # explicit DFS keeps deep enumerations off the recursion limit
    while stack:
        word = stack.pop()
        if len(word) == length:
            yield word
            continue
        options = letters if (word or first_letters is None) else list(first_letters)
        children = [word + (c,) for c in options if not word or word[-1] != -c]
        for child in reversed(children):
            stack.append(child)


def count_words(
    rank: int,
    length: int,
    prefix: Word = EMPTY,
    first_letters: Optional[Sequence[int]] = None,
    last_letters: Optional[Sequence[int]] = None,
) -> int:
    """How many words iter_words(rank, length, prefix, first_letters) yields ending in `last_letters`."""
    letters = alphabet(rank)
    last = set(letters if last_letters is None else last_letters)
    prefix = tuple(prefix)
    if len(prefix) >= length:
        return int(len(prefix) == length and (last_letters is None or (bool(prefix) and prefix[-1] in last)))
    if prefix:
        ends = {prefix[-1]: 1}
        start = len(prefix)
    else:
        ends = {c: 1 for c in (letters if first_letters is None else first_letters)}
        start = 1
    for _ in range(start, length):
        step: dict = {}
        for c, n in ends.items():
            for d in letters:
                if d != -c:
                    step[d] = step.get(d, 0) + n
        ends = step
    return sum(n for c, n in ends.items() if c in last)


def iter_length_lex(rank: int, min_length: int = 1, max_length: Optional[int] = None) -> Iterator[Word]:
    n = min_length
    while max_length is None or n <= max_length:
        yield from iter_words(rank, n)
        n += 1


def annulus(rank: int, L: int, delta: int, budget: Optional[int] = None) -> AnnularSet:
    """All reduced words with length in [L - delta, L + delta]."""
    if L < 1 or not 0 <= delta < L:
        raise ValueError(f"Annulus needs L >= 1 and 0 <= delta < L, got L={L}, delta={delta}")
    stream = iter_length_lex(rank, L - delta, L + delta)
    if budget is None:
        return AnnularSet(L=L, delta=delta, elements=list(stream), truncated=False)
    elements = list(islice(stream, budget + 1))
    truncated = len(elements) > budget
    if truncated:
        logger.warning(f"Annulus L={L}, delta={delta} truncated at {budget} words")
        elements = elements[:budget]
    return AnnularSet(L=L, delta=delta, elements=elements, truncated=truncated)
