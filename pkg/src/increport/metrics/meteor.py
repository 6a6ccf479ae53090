"""Alignment-based caption metric (exact + stem unigram matching).

Parameters are the canonical alpha=0.9, beta=3, gamma=0.5. Matching runs
in two stages: exact token matches first (always maximal per token type),
then stem matches over the leftovers. Among maximal matchings the scorer
wants the fewest chunks; finding that minimum is a set-partition problem,
so this module starts from a left-to-right greedy assignment that prefers
continuing runs and then reduces chunks with local edits (reassign, swap,
move). Short sentences get a bounded best-first walk over non-worsening
edits, which costs little there and escapes plateaus that defeat pure
descent; long sentences fall back to descent passes until a fixpoint.
Tests pin the short-sentence path against an exhaustive search.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Iterator

from .porter import stem
from .tokenizer import tokenize

ALPHA = 0.9
BETA = 3.0
GAMMA = 0.5

# Bounds for the best-first chunk search: sentences longer than this use
# descent passes only, and the walk never visits more states than the cap.
_SEARCH_MAX_LEN = 16
_SEARCH_FULL_LEN = 10
_SEARCH_LIMIT = 512
_SEARCH_FULL_LIMIT = 4096


@dataclass(frozen=True)
class Alignment:
    """Matched (candidate_pos, reference_pos) pairs, sorted by candidate."""

    pairs: tuple[tuple[int, int], ...]
    matches: int
    chunks: int


def _count_chunks(pairs: list[tuple[int, int]]) -> int:
    """A chunk is a maximal run of pairs adjacent in both sentences."""
    if not pairs:
        return 0
    pairs = sorted(pairs)
    chunks = 1
    for (i0, j0), (i1, j1) in zip(pairs, pairs[1:]):
        if i1 != i0 + 1 or j1 != j0 + 1:
            chunks += 1
    return chunks


def _greedy_stage(
    cand_keys: list,
    ref_keys: list,
    cand_free: list[bool],
    ref_free: list[bool],
    assignment: dict[int, int],
) -> None:
    """Match free candidate positions to free reference positions with equal
    keys, left to right, preferring the reference slot that continues the
    previous run. Mutates the free masks and the assignment in place."""
    for i in range(len(cand_keys)):
        if not cand_free[i]:
            continue
        key = cand_keys[i]
        chosen = -1
        prev_j = assignment.get(i - 1)
        if (
            prev_j is not None
            and prev_j + 1 < len(ref_keys)
            and ref_free[prev_j + 1]
            and ref_keys[prev_j + 1] == key
        ):
            chosen = prev_j + 1
        else:
            for j in range(len(ref_keys)):
                if ref_free[j] and ref_keys[j] == key:
                    chosen = j
                    break
        if chosen >= 0:
            assignment[i] = chosen
            cand_free[i] = False
            ref_free[chosen] = False


State = tuple[tuple[int, int], ...]


def _exact_count(pairs, cand_tokens: list[str], ref_tokens: list[str]) -> int:
    return sum(1 for i, j in pairs if cand_tokens[i] == ref_tokens[j])


def _neighbors(
    state: State, cand_stems: list[str], ref_stems: list[str]
) -> Iterator[State]:
    """Matchings one edit away with the same pair count: reassign a pair's
    reference slot, move a pair to a free candidate occurrence, or swap the
    reference slots of two pairs. Pair validity is stem equality."""
    used_i = {i for i, _ in state}
    used_j = {j for _, j in state}
    free_i = [i for i in range(len(cand_stems)) if i not in used_i]
    free_j = [j for j in range(len(ref_stems)) if j not in used_j]
    state_set = set(state)
    for i, j in state:
        rest = state_set - {(i, j)}
        for j2 in free_j:
            if ref_stems[j2] == cand_stems[i]:
                yield tuple(sorted(rest | {(i, j2)}))
        for i2 in free_i:
            if cand_stems[i2] == ref_stems[j]:
                yield tuple(sorted(rest | {(i2, j)}))
    for a in range(len(state)):
        i1, j1 = state[a]
        for b in range(a + 1, len(state)):
            i2, j2 = state[b]
            if cand_stems[i1] == ref_stems[j2] and cand_stems[i2] == ref_stems[j1]:
                swapped = state_set - {(i1, j1), (i2, j2)} | {(i1, j2), (i2, j1)}
                yield tuple(sorted(swapped))


def _plateau_search(
    start: State,
    cand_tokens: list[str],
    ref_tokens: list[str],
    cand_stems: list[str],
    ref_stems: list[str],
    limit: int,
) -> State:
    """Best-first walk over the matchings reachable from the greedy start.

    The walk may pass through states with more chunks or fewer exact pairs
    (reaching an optimum can require such detours, e.g. a three-cycle of
    reference slots done as two swaps), but only states that keep the
    maximal exact-pair count can become the result, so the staged match
    structure survives. Single edits connect all matchings of equal size,
    so within the state cap a small instance is searched completely.
    """
    base_exact = _exact_count(start, cand_tokens, ref_tokens)
    best_state, best_chunks = start, _count_chunks(list(start))
    heap: list[tuple[int, int, State]] = [(best_chunks, 0, start)]
    seen = {start}
    tick = 0
    while heap and len(seen) < limit and best_chunks > 1:
        _, _, state = heapq.heappop(heap)
        for neighbor in _neighbors(state, cand_stems, ref_stems):
            if neighbor in seen:
                continue
            seen.add(neighbor)
            tick += 1
            neighbor_chunks = _count_chunks(list(neighbor))
            if neighbor_chunks < best_chunks and (
                _exact_count(neighbor, cand_tokens, ref_tokens) == base_exact
            ):
                best_state, best_chunks = neighbor, neighbor_chunks
            heapq.heappush(heap, (neighbor_chunks, tick, neighbor))
    return best_state


def _improve(
    assignment: dict[int, int],
    cand_tokens: list[str],
    ref_tokens: list[str],
    cand_stems: list[str],
    ref_stems: list[str],
    cand_free: list[bool],
    ref_free: list[bool],
) -> None:
    """Lower the chunk count by local edits until none helps.

    Any pair only needs stem equality to be valid (equal tokens imply
    equal stems), but an edit is accepted only when it keeps the number
    of exact-token pairs unchanged, so the staged match structure is
    preserved while pairs may trade exact/stem roles between positions.
    """

    def chunks_now() -> int:
        return _count_chunks(list(assignment.items()))

    def exact_now() -> int:
        return sum(1 for i, j in assignment.items() if cand_tokens[i] == ref_tokens[j])

    base_exact = exact_now()

    improved = True
    while improved:
        improved = False
        base = chunks_now()

        # reassign a pair's reference slot
        for i, j in list(assignment.items()):
            for j2 in range(len(ref_free)):
                if ref_free[j2] and ref_stems[j2] == cand_stems[i]:
                    assignment[i] = j2
                    if chunks_now() < base and exact_now() == base_exact:
                        ref_free[j] = True
                        ref_free[j2] = False
                        base = chunks_now()
                        improved = True
                        j = j2
                    else:
                        assignment[i] = j

        # swap reference slots between two pairs
        items = list(assignment.items())
        for a in range(len(items)):
            for b in range(a + 1, len(items)):
                i1, j1 = items[a]
                i2, j2 = items[b]
                if assignment.get(i1) != j1 or assignment.get(i2) != j2:
                    continue
                if cand_stems[i1] == ref_stems[j2] and cand_stems[i2] == ref_stems[j1]:
                    assignment[i1], assignment[i2] = j2, j1
                    if chunks_now() < base and exact_now() == base_exact:
                        base = chunks_now()
                        improved = True
                        items[a] = (i1, j2)
                        items[b] = (i2, j1)
                    else:
                        assignment[i1], assignment[i2] = j1, j2

        # move a pair to a different free candidate occurrence
        for i, j in list(assignment.items()):
            for i2 in range(len(cand_free)):
                if cand_free[i2] and cand_stems[i2] == ref_stems[j]:
                    del assignment[i]
                    assignment[i2] = j
                    if chunks_now() < base and exact_now() == base_exact:
                        cand_free[i] = True
                        cand_free[i2] = False
                        base = chunks_now()
                        improved = True
                        break
                    del assignment[i2]
                    assignment[i] = j


def align(cand_tokens: list[str], ref_tokens: list[str]) -> Alignment:
    """Two-stage maximal unigram alignment with heuristic chunk reduction."""
    n, m = len(cand_tokens), len(ref_tokens)
    cand_stems = [stem(t) for t in cand_tokens]
    ref_stems = [stem(t) for t in ref_tokens]

    assignment: dict[int, int] = {}
    cand_free = [True] * n
    ref_free = [True] * m

    _greedy_stage(cand_tokens, ref_tokens, cand_free, ref_free, assignment)
    _greedy_stage(cand_stems, ref_stems, cand_free, ref_free, assignment)

    pairs = tuple(sorted(assignment.items()))
    if pairs and max(n, m) <= _SEARCH_MAX_LEN:
        limit = _SEARCH_FULL_LIMIT if max(n, m) <= _SEARCH_FULL_LEN else _SEARCH_LIMIT
        pairs = _plateau_search(
            pairs, cand_tokens, ref_tokens, cand_stems, ref_stems, limit
        )
    elif pairs:
        _improve(
            assignment,
            cand_tokens, ref_tokens,
            cand_stems, ref_stems,
            cand_free, ref_free,
        )
        pairs = tuple(sorted(assignment.items()))

    return Alignment(
        pairs=pairs, matches=len(pairs), chunks=_count_chunks(list(pairs))
    )


def score_pair(cand_tokens: list[str], ref_tokens: list[str]) -> float:
    """METEOR for one candidate/reference token pair; 0 when nothing aligns."""
    if not cand_tokens or not ref_tokens:
        return 0.0
    alignment = align(cand_tokens, ref_tokens)
    matches = alignment.matches
    if matches == 0:
        return 0.0
    precision = matches / len(cand_tokens)
    recall = matches / len(ref_tokens)
    f_mean = (precision * recall) / (ALPHA * precision + (1 - ALPHA) * recall)
    penalty = GAMMA * (alignment.chunks / matches) ** BETA
    return f_mean * (1.0 - penalty)


def meteor_item(candidate: str, references: list[str]) -> float:
    """Best score over the references (each reference scored independently)."""
    cand_tokens = tokenize(candidate)
    return max(score_pair(cand_tokens, tokenize(ref)) for ref in references)


def meteor(corpus) -> dict:
    """Per-item and mean scores for a corpus of candidate/reference items."""
    per_item = {
        item.item_id: meteor_item(item.candidate, list(item.references))
        for item in corpus.items
    }
    mean = sum(per_item.values()) / len(per_item) if per_item else 0.0
    return {"per_item": per_item, "corpus": mean}
