"""Shared fixtures: deterministic git repositories and toy models."""

from __future__ import annotations

import os
import subprocess
from pathlib import Path

import numpy as np
import pytest

from codesum.autodiff import Tensor
from codesum.corpus import Corpus, Origin, Sample
from codesum.model import Hyperparams, _assemble, _param_shapes
from codesum.rng import SplitMix64

_GIT_ENV = {
    "GIT_AUTHOR_NAME": "Fixture Author",
    "GIT_AUTHOR_EMAIL": "fixture@example.com",
    "GIT_COMMITTER_NAME": "Fixture Author",
    "GIT_COMMITTER_EMAIL": "fixture@example.com",
    "GIT_CONFIG_GLOBAL": "/dev/null",
    "GIT_CONFIG_SYSTEM": "/dev/null",
}


def run_git(repo: Path, *args: str, date: str | None = None) -> str:
    env = dict(os.environ)
    env.update(_GIT_ENV)
    if date is not None:
        env["GIT_AUTHOR_DATE"] = date
        env["GIT_COMMITTER_DATE"] = date
    proc = subprocess.run(
        ["git", "-C", str(repo), *args],
        env=env, capture_output=True, text=True, check=True,
    )
    return proc.stdout.strip()


def git_commit_all(repo: Path, message: str, date: str) -> str:
    run_git(repo, "add", "-A")
    run_git(repo, "commit", "-q", "-m", message, date=date)
    return run_git(repo, "rev-parse", "HEAD")


ALPHA_V1 = "int alpha(int x) {\n    return x + 1;\n}\n"
ALPHA_V2 = "int alpha(int x) {\n    if (x == 0) return 0;\n    return x + 1;\n}\n"
BETA = "void beta(void) {\n    /* noop */\n}\n"
GAMMA = "int gamma_helper(int y) {\n    return y * 2;\n}\n"
DELTA_C = "#include \"delta.h\"\nint delta(void) {\n    return 42;\n}\n"
DELTA_H = "#ifndef DELTA_H\n#define DELTA_H\nint delta(void);\n#endif\n"


@pytest.fixture
def fixture_repo(tmp_path):
    """A small deterministic repository.

    Three sequential commits on main, one side-branch commit merged back in,
    and a final commit touching two files.  Returns the repo path plus the
    hand-built list of (hash, message, paths) for every non-merge commit and
    the merge hash.
    """
    repo = tmp_path / "repo"
    repo.mkdir()
    run_git(repo, "init", "-q", "-b", "main")

    (repo / "alpha.c").write_text(ALPHA_V1)
    h1 = git_commit_all(repo, "add alpha scaffolding", "2021-03-01 10:00:00 +0000")

    (repo / "alpha.c").write_text(ALPHA_V2)
    h2 = git_commit_all(repo, "handle zero input in alpha",
                        "2021-03-02 10:00:00 +0000")

    (repo / "beta.c").write_text(BETA)
    (repo / "notes.md").write_text("design notes\n")
    h3 = git_commit_all(repo, "add beta module", "2021-03-03 10:00:00 +0000")

    run_git(repo, "checkout", "-q", "-b", "side")
    (repo / "gamma.c").write_text(GAMMA)
    h4 = git_commit_all(repo, "add gamma helpers", "2021-03-04 10:00:00 +0000")

    run_git(repo, "checkout", "-q", "main")
    run_git(repo, "merge", "-q", "--no-ff", "-m", "merge gamma branch", "side",
            date="2021-03-05 10:00:00 +0000")
    merge_hash = run_git(repo, "rev-parse", "HEAD")

    (repo / "delta.c").write_text(DELTA_C)
    (repo / "delta.h").write_text(DELTA_H)
    h5 = git_commit_all(repo, "split delta into header and impl",
                        "2021-03-06 10:00:00 +0000")

    expected = [
        (h1, "add alpha scaffolding", ["alpha.c"]),
        (h2, "handle zero input in alpha", ["alpha.c"]),
        (h3, "add beta module", ["beta.c"]),
        (h4, "add gamma helpers", ["gamma.c"]),
        (h5, "split delta into header and impl", ["delta.c", "delta.h"]),
    ]
    return {"path": repo, "expected": expected, "merge_hash": merge_hash}


def random_model(hyper: Hyperparams, src_size: int, tgt_size: int,
                 scale: float, seed: int):
    """Model parameters drawn uniform(-scale, scale) from SplitMix64."""
    rng = SplitMix64(seed)
    tensors = {}
    for name, shape in _param_shapes(src_size, tgt_size, hyper).items():
        size = int(np.prod(shape))
        flat = np.array([(2.0 * rng.next_float() - 1.0) * scale
                         for _ in range(size)])
        tensors[name] = Tensor(flat.reshape(shape))
    return _assemble(tensors, hyper.num_layers)


def copy_task_corpus(n_pairs: int = 32, n_words: int = 20) -> Corpus:
    """Patterned source->target pairs: the target mirrors the source tokens.

    Source tokens come from one namespace (w0..), targets from another
    (m0..) at the same positions, so a model with attention can learn the
    mapping as positional copying.  The second half reverses token order to
    keep all pairs distinct.
    """
    samples = []
    for k in range(n_pairs):
        length = 3 + (k % 4)
        idx = [(k + j) % n_words for j in range(length)]
        if k >= n_words:
            idx = idx[::-1]
        source = " ".join(f"w{i}" for i in idx)
        target = " ".join(f"m{i}" for i in idx)
        samples.append(Sample(id=f"pair-{k}", source=source, target=target,
                              origin=Origin.FUNCTION_PAIR))
    return Corpus(samples=samples, provenance="copy-task")
