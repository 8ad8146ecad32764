"""Mine (cleaned diff, commit message) pairs from a local git repository.

Walks the default branch oldest-to-newest via git plumbing commands and
emits one sample per file modification whose suffix is included.  Diffs are
taken against the first parent; the sample id is ``<hash>:<path>``, which is
collision-free without any language-aware function extraction.
"""

from __future__ import annotations

import subprocess
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import Corpus, Origin, Sample, deduplicate
from .rng import SplitMix64, shuffled

DEFAULT_EXTENSIONS = frozenset(
    {".c", ".cc", ".cpp", ".cxx", ".h", ".hh", ".hpp"}
)

_CONFLICT_MARKERS = ("<<<<<<<", "=======", ">>>>>>>")


class MiningError(RuntimeError):
    """Git invocation failure or unusable repository."""


@dataclass(frozen=True)
class FileModification:
    path: str
    change_type: str  # added | deleted | modified | renamed
    diff_text: str


@dataclass(frozen=True)
class CommitRecord:
    hash: str
    message: str
    timestamp: int
    parent_count: int
    modifications: list[FileModification] = field(default_factory=list)


@dataclass(frozen=True)
class MiningConfig:
    repo_path: str | Path
    max_commits: int | None = None
    include_extensions: frozenset[str] = DEFAULT_EXTENSIONS
    skip_merge_commits: bool = True
    dedup_mode: str = "none"  # none | exact_pair | target_only

    def __post_init__(self):
        if self.max_commits is not None and self.max_commits < 1:
            raise ValueError("max_commits must be positive when given")
        if self.dedup_mode not in ("none", "exact_pair", "target_only"):
            raise ValueError(f"unknown dedup_mode: {self.dedup_mode!r}")


def _git(repo: str | Path, *args: str) -> str:
    cmd = ["git", "-C", str(repo), "-c", "core.quotepath=false", *args]
    try:
        proc = subprocess.run(cmd, capture_output=True, check=False)
    except OSError as exc:
        raise MiningError(f"cannot run git: {exc}") from exc
    if proc.returncode != 0:
        detail = proc.stderr.decode("utf-8", errors="replace").strip()
        raise MiningError(f"git {' '.join(args[:1])} failed in {repo}: {detail}")
    return proc.stdout.decode("utf-8", errors="replace")


def clean_diff(raw: str) -> str:
    """Normalize a diff body for use as model input.

    CRLF and bare CR become LF; conflict-marker lines and ``@@`` hunk headers
    are dropped whole; runs of three or more blank lines collapse to one.
    Idempotent.
    """
    text = raw.replace("\r\n", "\n").replace("\r", "\n")
    kept: list[str] = []
    blanks = 0
    pending: list[str] = []
    for line in text.split("\n"):
        stripped = line.strip()
        if stripped.startswith(_CONFLICT_MARKERS):
            continue
        if line.startswith("@@"):
            continue
        if stripped == "":
            blanks += 1
            pending.append(line)
            continue
        if blanks >= 3:
            kept.append("")
        else:
            kept.extend(pending)
        blanks = 0
        pending = []
        kept.append(line)
    if pending:
        if blanks >= 3:
            kept.append("")
        else:
            kept.extend(pending)
    return "\n".join(kept)


def clean_message(raw: str) -> str:
    """Trim a commit message down to its leading paragraph.

    Normalizes line endings, strips surrounding whitespace, and truncates at
    the first blank line so sign-offs and issue-link trailers fall away.
    """
    text = raw.replace("\r\n", "\n").replace("\r", "\n").strip()
    kept = []
    for line in text.split("\n"):
        if line.strip() == "":
            break
        kept.append(line)
    return "\n".join(kept)


def _unquote(path: str) -> str:
    # git terminates unusual paths with a tab in ---/+++ lines and C-quotes
    # paths holding special characters
    path = path.split("\t", 1)[0] if not path.startswith('"') else path
    if path.startswith('"') and path.endswith('"') and len(path) >= 2:
        try:
            return path[1:-1].encode("utf-8").decode("unicode_escape")
        except UnicodeDecodeError:
            return path[1:-1]
    return path


def _strip_prefix(path: str) -> str:
    return path[2:] if path[:2] in ("a/", "b/") else path


def _parse_patch(patch: str) -> list[FileModification]:
    """Split a ``diff-tree -p`` stream into per-file modifications.

    ``diff_text`` keeps the hunk headers and +/- content lines; sections with
    no hunks at all (binary files, mode-only changes) are dropped.
    """
    mods: list[FileModification] = []
    lines = patch.split("\n")
    i = 0
    n = len(lines)
    while i < n:
        if not lines[i].startswith("diff --git "):
            i += 1
            continue
        header = lines[i]
        i += 1
        change_type = "modified"
        rename_to = None
        plus_path = None
        minus_path = None
        while i < n and not lines[i].startswith(("@@", "diff --git ")):
            line = lines[i]
            if line.startswith("new file mode"):
                change_type = "added"
            elif line.startswith("deleted file mode"):
                change_type = "deleted"
            elif line.startswith("rename to "):
                change_type = "renamed"
                rename_to = _unquote(line[len("rename to "):])
            elif line.startswith("rename from "):
                change_type = "renamed"
            elif line.startswith("+++ "):
                plus_path = _unquote(line[4:])
            elif line.startswith("--- "):
                minus_path = _unquote(line[4:])
            i += 1
        body_lines = []
        while i < n and not lines[i].startswith("diff --git "):
            body_lines.append(lines[i])
            i += 1
        if rename_to is not None:
            path = rename_to
        elif plus_path and plus_path != "/dev/null":
            path = _strip_prefix(plus_path)
        elif minus_path and minus_path != "/dev/null":
            path = _strip_prefix(minus_path)
        else:
            # Fall back to the b-side of the section header.
            tail = header[len("diff --git "):]
            split_at = tail.rfind(" b/")
            path = _unquote(tail[split_at + 3:]) if split_at >= 0 else tail
        body = "\n".join(body_lines).rstrip("\n")
        if not body.strip():
            continue
        mods.append(FileModification(path=path, change_type=change_type,
                                     diff_text=body))
    return mods


def walk_commits(config: MiningConfig) -> list[CommitRecord]:
    """Commits of the default branch, oldest to newest.

    ``max_commits`` bounds the walk counted from the newest commit.  Diffs
    are against the first parent (the empty tree for root commits).
    """
    repo = Path(config.repo_path)
    try:
        _git(repo, "rev-parse", "--git-dir")
    except MiningError as exc:
        raise MiningError(f"not a git repository: {repo} ({exc})") from exc
    rev_args = ["rev-list", "--reverse"]
    if config.max_commits is not None:
        rev_args += ["-n", str(config.max_commits)]
    rev_args.append("HEAD")
    try:
        rev_out = _git(repo, *rev_args)
    except MiningError as exc:
        raise MiningError(f"empty or unreadable history in {repo}: {exc}") from exc
    hashes = rev_out.split()
    if not hashes:
        raise MiningError(f"repository {repo} has an empty history")
    records = []
    for commit_hash in hashes:
        meta = _git(repo, "show", "-s", "--format=%P%x00%ct%x00%B", commit_hash)
        parents_field, timestamp_field, message = meta.split("\x00", 2)
        parents = parents_field.split()
        diff_args = ["diff-tree", "--no-commit-id", "-r", "-p",
                     "--find-renames"]
        if parents:
            diff_args += [parents[0], commit_hash]
        else:
            diff_args += ["--root", commit_hash]
        patch = _git(repo, *diff_args)
        records.append(
            CommitRecord(
                hash=commit_hash,
                message=message,
                timestamp=int(timestamp_field),
                parent_count=len(parents),
                modifications=_parse_patch(patch),
            )
        )
    return records


def mine_repository(config: MiningConfig) -> Corpus:
    """Emit one commit-pair sample per included file modification.

    Merge commits are skipped by default.  Modifications whose cleaned diff
    or cleaned message comes out empty are dropped: they carry nothing to
    learn from.  ``dedup_mode`` is applied to the assembled corpus last.
    """
    samples = []
    for record in walk_commits(config):
        if config.skip_merge_commits and record.parent_count >= 2:
            continue
        target = clean_message(record.message)
        if not target.strip():
            continue
        for mod in record.modifications:
            suffix = next(
                (s for s in config.include_extensions if mod.path.endswith(s)),
                None,
            )
            if suffix is None:
                continue
            source = clean_diff(mod.diff_text)
            if not source.strip():
                continue
            samples.append(
                Sample(
                    id=f"{record.hash}:{mod.path}",
                    source=source,
                    target=target,
                    origin=Origin.COMMIT_PAIR,
                    language_hint=suffix.lstrip("."),
                )
            )
    corpus = Corpus(samples=samples, provenance=f"git:{Path(config.repo_path)}")
    if config.dedup_mode != "none":
        corpus = deduplicate(corpus, config.dedup_mode)
    return corpus


def interleave(corpora: list[Corpus], seed: int) -> Corpus:
    """Round-robin merge of per-corpus seeded shuffles.

    Each corpus is shuffled with its own SplitMix64 generator sub-seeded from
    the master stream, then samples are taken one per corpus per round until
    all are exhausted.  Ids must be unique across the inputs.
    """
    if not corpora:
        raise ValueError("interleave requires at least one corpus")
    seen: set[str] = set()
    for corpus in corpora:
        for sample in corpus:
            if sample.id in seen:
                raise ValueError(f"duplicate id across corpora: {sample.id!r}")
            seen.add(sample.id)
    master = SplitMix64(seed)
    piles = [shuffled(c.samples, SplitMix64(master.next_u64())) for c in corpora]
    merged = []
    for round_idx in range(max(len(p) for p in piles)):
        for pile in piles:
            if round_idx < len(pile):
                merged.append(pile[round_idx])
    provenance = "interleave(" + "; ".join(c.provenance for c in corpora) + ")"
    return Corpus(samples=merged, provenance=provenance)
