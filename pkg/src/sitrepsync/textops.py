"""Plain-text diffing, strict and fuzzy patch application, and position mapping.

Offsets are counted in Unicode scalar values throughout, never bytes, so a
range can never split a multi-byte character.  All functions are pure and
safe to call from any thread.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

DEFAULT_TEXT_LIMIT = 1_048_576  # characters; documents are capped at 1 MiB
CHAR_DIFF_CEILING = 10_000  # above this, fall back to line-level coarsening
DEFAULT_CONTEXT_LEN = 4
DEFAULT_FUZZ_WINDOW = 32


class SizeLimitExceeded(ValueError):
    pass


class BaseMismatch(ValueError):
    """A script's EQUAL or DELETE text disagrees with the base text."""

    def __init__(self, position: int):
        super().__init__(f"script does not match base text at position {position}")
        self.position = position


class PositionOutOfRange(ValueError):
    pass


class OpKind(str, Enum):
    EQUAL = "="
    INSERT = "+"
    DELETE = "-"


@dataclass(frozen=True)
class DiffOp:
    kind: OpKind
    text: str


DiffScript = list[DiffOp]


def equal(text: str) -> DiffOp:
    return DiffOp(OpKind.EQUAL, text)


def insert(text: str) -> DiffOp:
    return DiffOp(OpKind.INSERT, text)


def delete(text: str) -> DiffOp:
    return DiffOp(OpKind.DELETE, text)


def source_len(script: DiffScript) -> int:
    return sum(len(op.text) for op in script if op.kind is not OpKind.INSERT)


def source_text(script: DiffScript) -> str:
    return "".join(op.text for op in script if op.kind is not OpKind.INSERT)


def target_text(script: DiffScript) -> str:
    return "".join(op.text for op in script if op.kind is not OpKind.DELETE)


def edit_cost(script: DiffScript) -> int:
    """Total inserted plus deleted characters."""
    return sum(len(op.text) for op in script if op.kind is not OpKind.EQUAL)


def is_noop(script: DiffScript) -> bool:
    return all(op.kind is OpKind.EQUAL for op in script)


def canonicalize(ops: list[DiffOp]) -> DiffScript:
    """Merge adjacent same-kind ops, drop empty ops, order DELETE before INSERT
    within each change run."""
    out: list[DiffOp] = []
    run_del: list[str] = []
    run_ins: list[str] = []

    def flush_run() -> None:
        if run_del:
            out.append(delete("".join(run_del)))
            run_del.clear()
        if run_ins:
            out.append(insert("".join(run_ins)))
            run_ins.clear()

    for op in ops:
        if not op.text:
            continue
        if op.kind is OpKind.EQUAL:
            flush_run()
            if out and out[-1].kind is OpKind.EQUAL:
                out[-1] = equal(out[-1].text + op.text)
            else:
                out.append(op)
        elif op.kind is OpKind.DELETE:
            run_del.append(op.text)
        else:
            run_ins.append(op.text)
    flush_run()
    return out


def encode_script(script: DiffScript) -> list[list[str]]:
    """Wire form: array of [\"=\" | \"+\" | \"-\", text] pairs."""
    return [[op.kind.value, op.text] for op in script]


def decode_script(raw: object) -> DiffScript:
    if not isinstance(raw, list):
        raise ValueError("diff script must be a list")
    ops = []
    for item in raw:
        if (
            not isinstance(item, (list, tuple))
            or len(item) != 2
            or not isinstance(item[1], str)
        ):
            raise ValueError(f"bad diff op: {item!r}")
        try:
            kind = OpKind(item[0])
        except ValueError:
            raise ValueError(f"bad diff op kind: {item[0]!r}") from None
        ops.append(DiffOp(kind, item[1]))
    return canonicalize(ops)


# ---------------------------------------------------------------------------
# diff


def compute_diff(old: str, new: str, *, limit: int = DEFAULT_TEXT_LIMIT) -> DiffScript:
    """Character-level minimal diff (Myers) with line-level coarsening above
    CHAR_DIFF_CEILING characters.  apply_strict(old, result) == new always."""
    if len(old) > limit or len(new) > limit:
        raise SizeLimitExceeded(f"input exceeds {limit} characters")
    coarse = max(len(old), len(new)) > CHAR_DIFF_CEILING
    return canonicalize(_diff(old, new, coarse))


def _diff(a: str, b: str, coarse: bool) -> list[DiffOp]:
    if a == b:
        return [equal(a)] if a else []
    pre = _common_prefix_len(a, b)
    a_mid, b_mid = a[pre:], b[pre:]
    suf = _common_suffix_len(a_mid, b_mid)
    if suf:
        a_mid, b_mid = a_mid[:-suf], b_mid[:-suf]
    ops: list[DiffOp] = []
    if pre:
        ops.append(equal(a[:pre]))
    ops.extend(_diff_core(a_mid, b_mid, coarse))
    if suf:
        ops.append(equal(a[len(a) - suf :]))
    return ops


def _diff_core(a: str, b: str, coarse: bool) -> list[DiffOp]:
    if not a:
        return [insert(b)]
    if not b:
        return [delete(a)]
    if coarse:
        return _diff_line_mode(a, b)
    longer, shorter = (a, b) if len(a) > len(b) else (b, a)
    i = longer.find(shorter)
    if i != -1:
        # Shorter text sits inside the longer one: cost equals the length
        # difference, which is already minimal.
        kind = OpKind.INSERT if longer is b else OpKind.DELETE
        return [
            DiffOp(kind, longer[:i]),
            equal(shorter),
            DiffOp(kind, longer[i + len(shorter) :]),
        ]
    if len(shorter) == 1:
        # Single char with no containment: it cannot survive as an equality.
        return [delete(a), insert(b)]
    return _bisect(a, b)


def _bisect(a: str, b: str) -> list[DiffOp]:
    """Find the middle snake of the Myers edit graph and recurse on the halves."""
    n, m = len(a), len(b)
    max_d = (n + m + 1) // 2
    v_offset = max_d
    v_length = 2 * max_d
    v1 = [-1] * v_length
    v2 = [-1] * v_length
    v1[v_offset + 1] = 0
    v2[v_offset + 1] = 0
    delta = n - m
    # With an odd delta the forward path collides with the reverse path.
    front = delta % 2 != 0
    k1start = k1end = k2start = k2end = 0
    for d in range(max_d):
        for k1 in range(-d + k1start, d + 1 - k1end, 2):
            k1_offset = v_offset + k1
            if k1 == -d or (k1 != d and v1[k1_offset - 1] < v1[k1_offset + 1]):
                x1 = v1[k1_offset + 1]
            else:
                x1 = v1[k1_offset - 1] + 1
            y1 = x1 - k1
            while x1 < n and y1 < m and a[x1] == b[y1]:
                x1 += 1
                y1 += 1
            v1[k1_offset] = x1
            if x1 > n:
                k1end += 2
            elif y1 > m:
                k1start += 2
            elif front:
                k2_offset = v_offset + delta - k1
                if 0 <= k2_offset < v_length and v2[k2_offset] != -1:
                    x2 = n - v2[k2_offset]
                    if x1 >= x2:
                        return _bisect_split(a, b, x1, y1)
        for k2 in range(-d + k2start, d + 1 - k2end, 2):
            k2_offset = v_offset + k2
            if k2 == -d or (k2 != d and v2[k2_offset - 1] < v2[k2_offset + 1]):
                x2 = v2[k2_offset + 1]
            else:
                x2 = v2[k2_offset - 1] + 1
            y2 = x2 - k2
            while x2 < n and y2 < m and a[n - x2 - 1] == b[m - y2 - 1]:
                x2 += 1
                y2 += 1
            v2[k2_offset] = x2
            if x2 > n:
                k2end += 2
            elif y2 > m:
                k2start += 2
            elif not front:
                k1_offset = v_offset + delta - k2
                if 0 <= k1_offset < v_length and v1[k1_offset] != -1:
                    x1 = v1[k1_offset]
                    y1 = v_offset + x1 - k1_offset
                    x2 = n - x2
                    if x1 >= x2:
                        return _bisect_split(a, b, x1, y1)
    # No commonality at all.
    return [delete(a), insert(b)]


def _bisect_split(a: str, b: str, x: int, y: int) -> list[DiffOp]:
    return _diff(a[:x], b[:y], False) + _diff(a[x:], b[y:], False)


def _common_prefix_len(a: str, b: str) -> int:
    if not a or not b or a[0] != b[0]:
        return 0
    lo, hi = 0, min(len(a), len(b))
    mid, start = hi, 0
    while lo < mid:
        if a[start:mid] == b[start:mid]:
            lo = mid
            start = lo
        else:
            hi = mid
        mid = (hi - lo) // 2 + lo
    return mid


def _common_suffix_len(a: str, b: str) -> int:
    if not a or not b or a[-1] != b[-1]:
        return 0
    lo, hi = 0, min(len(a), len(b))
    mid, end = hi, 0
    while lo < mid:
        if a[len(a) - mid : len(a) - end] == b[len(b) - mid : len(b) - end]:
            lo = mid
            end = lo
        else:
            hi = mid
        mid = (hi - lo) // 2 + lo
    return mid


def _diff_line_mode(a: str, b: str) -> list[DiffOp]:
    enc_a, enc_b, lines = _lines_to_chars(a, b)
    line_ops = canonicalize(_diff(enc_a, enc_b, False))
    ops = [
        DiffOp(op.kind, "".join(lines[ord(ch)] for ch in op.text)) for op in line_ops
    ]
    # Re-diff small replacement blocks character-wise for tighter scripts.
    out: list[DiffOp] = []
    i = 0
    while i < len(ops):
        op = ops[i]
        if (
            op.kind is OpKind.DELETE
            and i + 1 < len(ops)
            and ops[i + 1].kind is OpKind.INSERT
            and len(op.text) + len(ops[i + 1].text) <= CHAR_DIFF_CEILING
        ):
            out.extend(_diff(op.text, ops[i + 1].text, False))
            i += 2
        else:
            out.append(op)
            i += 1
    return out


def _lines_to_chars(a: str, b: str) -> tuple[str, str, list[str]]:
    lines: list[str] = [""]
    index: dict[str, int] = {}

    def munge(text: str) -> str:
        chars = []
        start = 0
        while start < len(text):
            end = text.find("\n", start)
            end = len(text) - 1 if end == -1 else end
            line = text[start : end + 1]
            code = index.get(line)
            if code is None:
                lines.append(line)
                code = len(lines) - 1
                index[line] = code
            chars.append(chr(code))
            start = end + 1
        return "".join(chars)

    return munge(a), munge(b), lines


# ---------------------------------------------------------------------------
# application


def apply_strict(base: str, script: DiffScript) -> str:
    """Apply a script whose EQUAL and DELETE texts must match the base exactly."""
    out: list[str] = []
    cursor = 0
    for op in script:
        if op.kind is OpKind.INSERT:
            out.append(op.text)
            continue
        chunk = base[cursor : cursor + len(op.text)]
        if chunk != op.text:
            raise BaseMismatch(cursor + _common_prefix_len(chunk, op.text))
        if op.kind is OpKind.EQUAL:
            out.append(op.text)
        cursor += len(op.text)
    if cursor != len(base):
        raise BaseMismatch(cursor)
    return "".join(out)


@dataclass(frozen=True)
class Patch:
    """One contiguous change with a sliver of preceding context for relocation."""

    position: int  # source-side offset of the change
    context_before: str
    deleted: str
    inserted: str

    def __post_init__(self) -> None:
        if not self.deleted and not self.inserted:
            raise ValueError("patch must delete or insert something")


def to_patches(script: DiffScript, context_len: int = DEFAULT_CONTEXT_LEN) -> list[Patch]:
    """Turn each non-EQUAL run of a script into one relocatable patch.

    Context comes from the EQUAL span preceding the run: that text survives on
    both sides of the edit, so it is still findable after earlier patches in
    the same list have been applied.
    """
    if context_len < 0:
        raise ValueError("context_len must be >= 0")
    patches: list[Patch] = []
    cursor = 0
    run_start = -1
    run_del: list[str] = []
    run_ins: list[str] = []
    prev_equal = ""

    def flush() -> None:
        nonlocal run_start
        if run_start >= 0:
            context = prev_equal[len(prev_equal) - context_len :] if context_len else ""
            patches.append(
                Patch(run_start, context, "".join(run_del), "".join(run_ins))
            )
            run_del.clear()
            run_ins.clear()
            run_start = -1

    for op in script:
        if op.kind is OpKind.EQUAL:
            flush()
            prev_equal = op.text
            cursor += len(op.text)
            continue
        if run_start < 0:
            run_start = cursor
        if op.kind is OpKind.DELETE:
            run_del.append(op.text)
            cursor += len(op.text)
        else:
            run_ins.append(op.text)
    flush()
    return patches


def apply_fuzzy(
    text: str, patches: list[Patch], window: int = DEFAULT_FUZZ_WINDOW
) -> tuple[str, list[bool]]:
    """Apply patches at the nearest position within `window` of where they are
    expected; patches whose context+deleted text cannot be found are skipped."""
    if window < 0:
        raise ValueError("window must be >= 0")
    applied = [False] * len(patches)
    order = sorted(range(len(patches)), key=lambda i: patches[i].position)
    out = text
    delta = 0
    for idx in order:
        patch = patches[idx]
        expected = patch.position + delta
        spot = _locate(out, patch, expected, window)
        if spot is None:
            continue
        out = out[:spot] + patch.inserted + out[spot + len(patch.deleted) :]
        applied[idx] = True
        delta = spot + len(patch.inserted) - (patch.position + len(patch.deleted))
    return out, applied


def _locate(text: str, patch: Patch, expected: int, window: int) -> int | None:
    ctx, deleted = patch.context_before, patch.deleted
    for dist in range(window + 1):
        for pos in (expected - dist, expected + dist) if dist else (expected,):
            if pos - len(ctx) < 0 or pos + len(deleted) > len(text):
                continue
            if text[pos - len(ctx) : pos] == ctx and text[pos : pos + len(deleted)] == deleted:
                return pos
    return None


# ---------------------------------------------------------------------------
# position mapping


def map_position(script: DiffScript, pos: int, *, bias: str = "right") -> int:
    """Map a source offset through a script to the target side.

    Positions strictly inside a deleted span snap to the deletion's start on
    the target side.  At op boundaries, `bias="right"` lets insertions at the
    position push it right; `bias="left"` keeps it before them.
    """
    if bias not in ("right", "left"):
        raise ValueError(f"bad bias {bias!r}")
    if pos < 0 or pos > source_len(script):
        raise PositionOutOfRange(f"position {pos} outside source text")
    src = 0
    tgt = 0
    for op in script:
        n = len(op.text)
        if op.kind is OpKind.INSERT:
            if bias == "left" and src == pos:
                return tgt
            tgt += n
        elif op.kind is OpKind.EQUAL:
            if src <= pos < src + n:
                return tgt + (pos - src)
            src += n
            tgt += n
        else:  # DELETE
            if src <= pos < src + n:
                return tgt
            src += n
    return tgt
