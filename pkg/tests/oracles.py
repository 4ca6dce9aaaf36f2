"""Independent reference implementations used by the tests."""

import itertools

from codeswitch.align import SentenceAlignment


def brute_force_spans(links, m, n):
    """Every (L1 interval, L2 interval) pair forming a switchable phrase.

    Enumerates interval pairs directly rather than deriving the L2 side from
    the links: the L1 interval must hold a link, links must stay inside the
    box in both directions, every L2 position of the interval must be linked,
    and no link inside may cross a link outside.
    """
    out = set()
    for s, e in itertools.combinations_with_replacement(range(m), 2):
        for lo, hi in itertools.combinations_with_replacement(range(n), 2):
            ins = [(i, j) for i, j in links if s <= i <= e]
            if not ins:
                continue
            if any(not lo <= j <= hi for _, j in ins):
                continue
            if any(lo <= j <= hi and not s <= i <= e for i, j in links):
                continue
            if {j for _, j in ins} != set(range(lo, hi + 1)):
                continue
            outs = [(i, j) for i, j in links if not s <= i <= e]
            if any((i < i2) != (j < j2) and i != i2 and j != j2
                   for i, j in ins for i2, j2 in outs):
                continue
            out.add((s, e, lo, hi))
    return out


def all_alignments(cap=5000, max_len=6):
    """Alignments over sentences of length <= max_len, at most ``cap`` of them.

    Unrestricted link sets for lengths up to 3, then every permutation and
    every one-link-per-L1-token function (with unaligned tokens) for longer
    sentences, shortest first.
    """
    count = 0

    def emit(links, m, n):
        nonlocal count
        count += 1
        return SentenceAlignment(tuple(links), m, n)

    for m in range(1, 4):
        for n in range(1, 4):
            cells = list(itertools.product(range(m), range(n)))
            for mask in range(1 << len(cells)):
                yield emit([c for k, c in enumerate(cells) if mask >> k & 1], m, n)
    for length in range(4, max_len + 1):
        for perm in itertools.permutations(range(length)):
            if count >= cap:
                return
            yield emit(list(enumerate(perm)), length, length)
        for n in range(max(1, length - 1), length + 1):
            for f in itertools.product(range(-1, n), repeat=length):
                if count >= cap:
                    return
                yield emit([(i, j) for i, j in enumerate(f) if j >= 0], length, n)


def crosses(a, b):
    (i, j), (i2, j2) = a, b
    return (i - i2) * (j - j2) < 0


def pg_exhaustive(model, source, max_len):
    """Every terminated id sequence with its teacher-forced log probability.

    A sequence ends at its first end marker or after ``max_len`` tokens.
    Returned best first, ties by ascending ids.
    """
    from codeswitch.corpus import EOS_ID

    src = model.encode_source(source)
    seqs = []

    def grow(prefix):
        for y in range(src.n_ext):
            seq = prefix + (y,)
            if y == EOS_ID or len(seq) == max_len:
                seqs.append(seq)
            else:
                grow(seq)

    grow(())
    scored = [(model.sequence_log_prob(src, s), s) for s in seqs]
    scored.sort(key=lambda t: (-t[0], t[1]))
    return scored


def fusion_exhaustive(emissions, lm, cfg):
    """Best (fused score, characters) over all character sequences."""
    import math

    from codeswitch.fusion import fused_score, segment
    from codeswitch.lm import score_sentence

    best = None
    inv = emissions.inventory
    for cols in itertools.product(range(len(inv)), repeat=emissions.steps):
        chars = tuple(inv[c] for c in cols)
        trans = math.fsum(emissions.log_probs[t, c] for t, c in enumerate(cols))
        words = segment("".join(chars))
        lm_score = score_sentence(lm, words) if lm is not None else 0.0
        key = (-fused_score(trans, lm_score, len(words), cfg), chars)
        if best is None or key < best:
            best = key
    return -best[0], best[1]


def valid_switch(links, m, n, spans, l1, l2, sent):
    """Whether ``sent`` is ``l1`` with the given spans replaced by their L2 blocks.

    Each span must be one the brute-force enumerator accepts, spans must be
    disjoint and in the same order on both sides, and the sentence is rebuilt
    by plain list splicing.
    """
    allowed = brute_force_spans(links, m, n)
    boxes = [(s.l1_start, s.l1_end, s.l2_start, s.l2_end) for s in spans]
    if not boxes or any(b not in allowed for b in boxes):
        return False
    for (a1, a2, b1, b2), (c1, c2, d1, d2) in itertools.combinations(sorted(boxes), 2):
        if not (a2 < c1 and b2 < d1):
            return False
    words, pos = [], 0
    for s, e, lo, hi in sorted(boxes):
        words += l1[pos:s] + l2[lo:hi + 1]
        pos = e + 1
    return words + l1[pos:] == list(sent)
