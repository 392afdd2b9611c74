"""Candidate filtering, the synthesis loop, composite combiners and the cache."""
from __future__ import annotations

import json
import logging
import os
import random
from dataclasses import asdict, dataclass, field
from typing import Iterable, Optional, Sequence, Union

from . import __version__
from .dsl import CONCAT, FIRST, SECOND, Combiner, Rerun, format_combiner, is_recop, is_run, is_structop, parse_combiner
from .enumerator import DEFAULT_MAX_SIZE, CandidateSet, all_candidates
from .errors import CombsynthError, DomainError, ExecError
from .inputgen import (
    DEFAULT_SHAPE,
    dictionary_for,
    effective_inputs,
    extract_literals,
    literal_shape,
    probe_command,
    random_shape,
)
from .oracle import CommandHandle, Observation, observe_many

log = logging.getLogger(__name__)


# --------------------------------------------------------------------------
# plausibility


def is_plausible(c: Combiner, obs: Union[Observation, tuple], f=None) -> bool:
    y1, y2, y12 = obs.outputs if isinstance(obs, Observation) else obs[:3]
    try:
        return c.legal(y1, f) and c.legal(y2, f) and c.apply(y1, y2, f) == y12
    except DomainError:
        return False
    except (CombsynthError, ValueError) as exc:
        log.debug("%s not plausible: %s", c, exc)
        return False


def filter_observations(candidates: Iterable[Combiner], observations: Iterable, f=None) -> list[Combiner]:
    alive = list(candidates)
    for obs in observations:
        if obs is None:
            continue
        alive = [c for c in alive if is_plausible(c, obs, f)]
        if not alive:
            break
    return alive


def filter_candidates(f, candidates, pairs: Sequence[tuple[bytes, bytes]], pool_size: int = 1):
    """Keep the candidates plausible on every pair that could be observed.

    Returns a :class:`CandidateSet` when given one, otherwise a list.
    """
    observations = observe_many(f, pairs, pool_size) if pairs else []
    alive = filter_observations(candidates, observations, f)
    if isinstance(candidates, CandidateSet):
        return candidates.keep(alive)
    return alive


def making_progress(history: Sequence[int], R: int = 3) -> bool:
    """False once the last ``R`` rounds eliminated nothing."""
    if not history:
        raise ValueError("history must be nonempty")
    if len(history) - 1 < R:
        return True
    tail = history[-(R + 1):]
    return any(a != b for a, b in zip(tail, tail[1:]))


# --------------------------------------------------------------------------
# composite combiners


@dataclass(frozen=True)
class CompositeCombiner:
    """Guarded chain: the first member whose domain admits both inputs wins."""

    members: tuple[Combiner, ...]

    def __post_init__(self) -> None:
        if not self.members:
            raise ValueError("a composite needs at least one member")

    @property
    def kind(self) -> str:
        return self.members[0].kind

    @property
    def is_concat(self) -> bool:
        return self.members == (CONCAT,)

    @property
    def is_rerun_only(self) -> bool:
        return all(isinstance(m, Rerun) for m in self.members)

    def legal(self, s: bytes, f=None) -> bool:
        return any(m.legal(s, f) for m in self.members)

    def apply(self, y1: bytes, y2: bytes, f=None) -> bytes:
        for m in self.members:
            if m.legal(y1, f) and m.legal(y2, f):
                return m.apply(y1, y2, f)
        raise DomainError("no composite member admits both inputs")

    def texts(self) -> list[str]:
        return [format_combiner(m) for m in self.members]

    def __str__(self) -> str:
        return " | ".join(self.texts())

    @classmethod
    def from_texts(cls, texts: Sequence[str]) -> "CompositeCombiner":
        return cls(tuple(parse_combiner(t) for t in texts))


_FULL_DOMAIN = (CONCAT, FIRST, SECOND)


def make_composite(plausible: Iterable[Combiner]) -> CompositeCombiner:
    members = list(plausible)
    if not members:
        raise ValueError("plausible set is empty")
    chosen = [c for c in members if is_recop(c)] or [c for c in members if is_structop(c)] \
        or [c for c in members if is_run(c)]
    # concat/first/second accept every string, so they subsume the rest
    for c in chosen:
        if c in _FULL_DOMAIN:
            return CompositeCombiner((c,))
    return CompositeCombiner(tuple(chosen))


# --------------------------------------------------------------------------
# synthesis loop


@dataclass
class SynthConfig:
    max_size: int = DEFAULT_MAX_SIZE
    per_shape_pairs: int = 4
    mutation_rounds: int = 6
    no_progress_rounds: int = 3
    min_rounds: int = 2
    max_rounds: int = 12
    seed: int = 0
    pool_size: int = 1

    def __post_init__(self) -> None:
        for name in ("per_shape_pairs", "mutation_rounds", "no_progress_rounds", "min_rounds",
                     "max_rounds", "pool_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.max_size < 3:
            raise ValueError("max_size must be at least 3")


@dataclass
class SynthesisResult:
    command: str
    plausible: CandidateSet
    composite: Optional[CompositeCombiner]
    rounds: int
    observations_used: int
    status: str
    stream_output: bool = True
    history: list[int] = field(default_factory=list)
    input_class: str = "any"

    @property
    def ok(self) -> bool:
        return self.status == "ok"


def _check_flapping(f: CommandHandle, pairs: Sequence[tuple[bytes, bytes]]) -> None:
    for x1, x2 in pairs[-4:]:
        for data in (x1, x2, x1 + x2):
            f.rerun_check(data)


def synthesize(f: CommandHandle, max_size: Optional[int] = None,
               config: Optional[SynthConfig] = None) -> SynthesisResult:
    """Search for combiners of ``f``; raises UnsupportedCommand if every probe fails."""
    config = config or SynthConfig()
    if max_size is not None:
        config = SynthConfig(**{**asdict(config), "max_size": max_size})
    rng = random.Random(config.seed)
    input_class = probe_command(f)
    literals, numerics = extract_literals(f.text)
    dictionary = dictionary_for(input_class, literals, rng)
    flags = f.sort_flags
    C = all_candidates(config.max_size, [flags] if flags else None)
    history = [len(C)]
    observed = 0
    pairs: list[tuple[bytes, bytes]] = []
    rounds = 0
    for rounds in range(1, config.max_rounds + 1):
        if rounds == 1:
            seed = literal_shape(numerics[0]) if numerics else DEFAULT_SHAPE
        else:
            seed = random_shape(rng)
        batch, alive, _ = effective_inputs(f, C, seed, config.mutation_rounds, config.per_shape_pairs,
                                           rng, dictionary)
        pairs.extend(batch)
        observed += len(batch)
        C = C.keep(alive)
        history.append(len(C))
        log.info("round %d: %d candidates left (%s)", rounds, len(C), f.text)
        if not C:
            _check_flapping(f, pairs)
            return SynthesisResult(f.text, C, None, rounds, observed, "empty", f.stream_output, history,
                                   input_class)
        if rounds >= config.min_rounds and not making_progress(history, config.no_progress_rounds):
            break
    return SynthesisResult(f.text, C, make_composite(C), rounds, observed, "ok", f.stream_output, history,
                           input_class)


# --------------------------------------------------------------------------
# estimator-style front end


class CombinerSynthesizer:
    """Fit a combiner for a command, estimator style.

    >>> est = CombinerSynthesizer(random_state=7).fit("wc -l")  # doctest: +SKIP
    >>> est.composite_.texts()                                    # doctest: +SKIP
    ['(back nl add)']
    """

    def __init__(self, max_size: int = DEFAULT_MAX_SIZE, per_shape_pairs: int = 4, mutation_rounds: int = 6,
                 no_progress_rounds: int = 3, random_state: int = 0, timeout: float = 10.0,
                 pool_size: int = 1, builtin_only: bool = False):
        self.max_size = max_size
        self.per_shape_pairs = per_shape_pairs
        self.mutation_rounds = mutation_rounds
        self.no_progress_rounds = no_progress_rounds
        self.random_state = random_state
        self.timeout = timeout
        self.pool_size = pool_size
        self.builtin_only = builtin_only

    _PARAMS = ("max_size", "per_shape_pairs", "mutation_rounds", "no_progress_rounds", "random_state",
               "timeout", "pool_size", "builtin_only")

    def get_params(self, deep: bool = True) -> dict:
        return {name: getattr(self, name) for name in self._PARAMS}

    def set_params(self, **params) -> "CombinerSynthesizer":
        for name, value in params.items():
            if name not in self._PARAMS:
                raise ValueError(f"unknown parameter {name!r}")
            setattr(self, name, value)
        return self

    def _config(self) -> SynthConfig:
        return SynthConfig(max_size=self.max_size, per_shape_pairs=self.per_shape_pairs,
                           mutation_rounds=self.mutation_rounds, no_progress_rounds=self.no_progress_rounds,
                           seed=self.random_state, pool_size=self.pool_size)

    def fit(self, command, y=None) -> "CombinerSynthesizer":
        if isinstance(command, CommandHandle):
            f = command
        else:
            f = CommandHandle.from_text(command, builtin_only=self.builtin_only, timeout=self.timeout)
        result = synthesize(f, config=self._config())
        self.command_ = f
        self.result_ = result
        self.status_ = result.status
        self.plausible_ = result.plausible
        self.composite_ = result.composite
        self.rounds_ = result.rounds
        self.n_observations_ = result.observations_used
        return self

    def _check_fitted(self) -> None:
        if not hasattr(self, "result_"):
            raise RuntimeError("call fit() first")

    def combine(self, y1: bytes, y2: bytes) -> bytes:
        self._check_fitted()
        if self.composite_ is None:
            raise DomainError(f"no combiner for {self.command_.text!r}")
        return self.composite_.apply(y1, y2, self.command_)

    def score(self, pairs: Sequence[tuple[bytes, bytes]]) -> float:
        """Fraction of pairs on which the divide-and-conquer equation holds."""
        self._check_fitted()
        if not pairs:
            return 1.0
        good = 0
        for x1, x2 in pairs:
            f = self.command_
            try:
                good += self.combine(f.run(x1), f.run(x2)) == f.run(x1 + x2)
            except (CombsynthError, ExecError):
                pass
        return good / len(pairs)


# --------------------------------------------------------------------------
# cache

CACHE_VERSION = 1


def cache_record(result: SynthesisResult, max_size: int) -> dict:
    return {
        "command": result.command,
        "status": result.status,
        "combiners": result.composite.texts() if result.composite else [],
        "plausible": len(result.plausible),
        "max_size": max_size,
        "observations": result.observations_used,
        "rounds": result.rounds,
        "stream_output": result.stream_output,
        "version": __version__,
    }


class CombinerCache:
    """JSON file mapping normalized command text to a synthesis record."""

    def __init__(self, path: Optional[str] = None):
        self.path = path
        self.records: dict[str, dict] = {}
        if path and os.path.exists(path):
            with open(path) as fh:
                data = json.load(fh)
            self.records = dict(data.get("records", {}))

    def get(self, key: str) -> Optional[dict]:
        return self.records.get(key)

    def put(self, key: str, record: dict) -> None:
        self.records[key] = record

    def composite(self, key: str) -> Optional[CompositeCombiner]:
        rec = self.get(key)
        if rec is None or not rec.get("combiners"):
            return None
        return CompositeCombiner.from_texts(rec["combiners"])

    def save(self, path: Optional[str] = None) -> None:
        path = path or self.path
        if not path:
            return
        tmp = f"{path}.tmp"
        with open(tmp, "w") as fh:
            json.dump({"version": CACHE_VERSION, "records": self.records}, fh, indent=2, sort_keys=True)
            fh.write("\n")
        os.replace(tmp, path)
