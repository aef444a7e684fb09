"""TOML experiment configs: sections model, decode, policy, estimator, run, sweep.

Unknown sections or keys are errors; a typo in a threshold name would
otherwise silently fall back to a default and invalidate a sweep.
"""

from __future__ import annotations

import copy
import re
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .decode import SAMPLERS, DecodeConfig
from .routing import EstimatorSpec, RoutingState
from .synthmodel import ModelSpec


class ConfigError(ValueError):
    pass


# key -> (type, default); REQUIRED marks mandatory keys
REQUIRED = object()
_NUM = (int, float)

SCHEMA = {
    "model": {
        "vocab_size": (int, 64), "seed": (int, 0), "sharpness": (_NUM, 60.0),
        "drift": (_NUM, 0.0), "context_weight": (_NUM, 0.05), "eos_rate": (_NUM, 0.0),
    },
    "decode": {
        "block_size": (int, REQUIRED), "max_steps": (int, None), "conf_threshold": (_NUM, 0.9),
        "temper": (_NUM, 1.0), "schedule": (str, "dynamic"), "draft_mask_mode": (str, "block"),
        "cache_mode": (str, "block"), "verifier_view": (str, "position_aligned"),
        "max_new_tokens": (int, 64), "greedy": (bool, False), "noise": (str, "linear"),
        "sampler": (str, "s2d2"),
    },
    "policy": {
        "kind": (str, "min_span"), "tau_span": (int, 1), "tau_score": (_NUM, 0.0),
        "tau_on": (_NUM, 1.0), "tau_off": (_NUM, -5.0), "score_mode": (str, "static"),
        "cost": (_NUM, 0.0), "ucb_beta": (_NUM, 1.0), "bins": (list, [2, 2, 2]),
        "h_init": (str, "on"), "persist": (bool, True),
    },
    "estimator": {
        "kind": (str, "soft_entropy"), "beta": (_NUM, 1.0), "gamma_conf": (_NUM, 1.0),
        "tau_ent": (_NUM, 0.1), "tau_margin": (_NUM, 0.1),
    },
    "run": {
        "seed": (int, 0), "prompts": (list, None), "prompts_file": (str, None),
        "arness_k": (int, 2),
    },
    "sweep": {
        "n_sequences": (int, 4), "grid": (dict, {}),
    },
}


@dataclass
class Experiment:
    model: ModelSpec
    decode: DecodeConfig
    sampler: str
    policy: dict
    estimator: EstimatorSpec
    seed: int
    prompts: list
    arness_k: int
    persist: bool
    raw: dict = field(repr=False, default_factory=dict)

    def routing_state(self) -> RoutingState:
        p = dict(self.policy)
        return RoutingState(
            policy=p["kind"], tau_span=p["tau_span"], tau_score=p["tau_score"],
            tau_on=p["tau_on"], tau_off=p["tau_off"], score_mode=p["score_mode"],
            cost=p["cost"], estimator=self.estimator, ucb_beta=p["ucb_beta"],
            bins=tuple(p["bins"]), h_on=p["h_init"] == "on",
        )


def _line_of(text: str, section: str, key: str) -> int | None:
    sec = None
    for n, line in enumerate(text.splitlines(), 1):
        m = re.match(r"\s*\[([^\]]+)\]", line)
        if m:
            sec = m.group(1).strip()
            continue
        if sec == section and re.match(rf"\s*\"?{re.escape(key)}\"?\s*=", line):
            return n
    return None


class _Ctx:
    def __init__(self, path: str, text: str):
        self.path, self.text = path, text

    def fail(self, section: str, key: str | None, msg: str):
        where = f"{section}.{key}" if key else section
        line = _line_of(self.text, section, key) if key else None
        loc = f"{self.path}:{line}" if line else self.path
        raise ConfigError(f"{loc}: field '{where}': {msg}")


def _typed(ctx: _Ctx, section: str, key: str, value, typ):
    if typ is _NUM:
        if isinstance(value, bool) or not isinstance(value, _NUM):
            ctx.fail(section, key, f"expected a number, got {value!r}")
        return float(value)
    if typ is int and (isinstance(value, bool) or not isinstance(value, int)):
        ctx.fail(section, key, f"expected an integer, got {value!r}")
    if not isinstance(value, typ):
        ctx.fail(section, key, f"expected {typ.__name__}, got {value!r}")
    return value


def _normalize(ctx: _Ctx, raw: dict) -> dict:
    out = {}
    for section in raw:
        if section not in SCHEMA:
            ctx.fail(section, None, f"unknown section; expected one of {sorted(SCHEMA)}")
        if not isinstance(raw[section], dict):
            ctx.fail(section, None, "must be a table")
    for section, keys in SCHEMA.items():
        given = raw.get(section, {})
        for k in given:
            if k not in keys:
                ctx.fail(section, k, "unknown key")
        vals = {}
        for k, (typ, default) in keys.items():
            if k in given:
                vals[k] = _typed(ctx, section, k, given[k], typ)
            elif default is REQUIRED:
                ctx.fail(section, k, "missing required field")
            else:
                vals[k] = copy.deepcopy(default)
        out[section] = vals
    return out


def _read_prompts(ctx: _Ctx, run: dict, base: Path) -> list:
    if run["prompts"] is not None and run["prompts_file"] is not None:
        ctx.fail("run", "prompts", "give prompts or prompts_file, not both")
    if run["prompts_file"] is not None:
        p = Path(run["prompts_file"])
        p = p if p.is_absolute() else base / p
        try:
            lines = p.read_text().splitlines()
        except OSError as e:
            ctx.fail("run", "prompts_file", str(e))
        try:
            prompts = [[int(t) for t in ln.split()] for ln in lines if ln.strip()]
        except ValueError:
            ctx.fail("run", "prompts_file", "prompts must be space-separated integers")
    elif run["prompts"] is not None:
        prompts = run["prompts"]
    else:
        prompts = [[1, 2, 3, 4]]
    if not prompts or any(not isinstance(p, list) or not p for p in prompts):
        ctx.fail("run", "prompts", "need a list of non-empty token lists")
    for p in prompts:
        if any(isinstance(t, bool) or not isinstance(t, int) for t in p):
            ctx.fail("run", "prompts", "token ids must be integers")
    return prompts


def build(ctx: _Ctx, norm: dict, base: Path) -> Experiment:
    m, d, pol, est, run = (norm[s] for s in ("model", "decode", "policy", "estimator", "run"))

    def make(section, fn, **kw):
        try:
            return fn(**kw)
        except (ValueError, TypeError) as e:
            ctx.fail(section, None, str(e))

    model = make("model", ModelSpec, **m)
    dec = {k: v for k, v in d.items() if k != "sampler"}
    decode = make("decode", DecodeConfig, **dec)
    if d["sampler"] not in SAMPLERS:
        ctx.fail("decode", "sampler", f"must be one of {SAMPLERS}")
    estimator = make("estimator", EstimatorSpec, **est)
    if pol["h_init"] not in ("on", "off"):
        ctx.fail("policy", "h_init", "must be 'on' or 'off'")
    prompts = _read_prompts(ctx, run, base)
    vocab = model.vocab
    for p in prompts:
        if any(not 0 <= t < vocab.size or t == vocab.mask_id for t in p):
            ctx.fail("run", "prompts", f"token ids must be in [0, {vocab.size}) and not MASK ({vocab.mask_id})")
    if run["arness_k"] < 1:
        ctx.fail("run", "arness_k", "must be >= 1")
    exp = Experiment(model, decode, d["sampler"], pol, estimator, run["seed"], prompts,
                     run["arness_k"], pol["persist"], raw=norm)
    make("policy", exp.routing_state)
    return exp


def load(path, seed_override: int | None = None) -> tuple[Experiment, dict]:
    """Parse and validate a config file; returns the experiment and sweep section."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"{path}: {e}") from None
    ctx = _Ctx(str(path), text)
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{path}: {e}") from None
    norm = _normalize(ctx, raw)
    if seed_override is not None:
        norm["run"]["seed"] = seed_override
    exp = build(ctx, norm, path.parent)
    sweep = norm["sweep"]
    for key, values in sweep["grid"].items():
        sec, _, k = key.partition(".")
        if sec not in SCHEMA or sec == "sweep" or k not in SCHEMA[sec]:
            ctx.fail("sweep.grid", key, "grid keys must name an existing 'section.key'")
        if not isinstance(values, list) or not values:
            ctx.fail("sweep.grid", key, "grid values must be a non-empty list")
    if sweep["n_sequences"] < 1:
        ctx.fail("sweep", "n_sequences", "must be >= 1")
    return exp, sweep


def with_overrides(ctx_path: str, exp: Experiment, overrides: dict) -> Experiment:
    """Rebuild ``exp`` with ``{"section.key": value}`` overrides applied."""
    norm = copy.deepcopy(exp.raw)
    for key, val in overrides.items():
        sec, _, k = key.partition(".")
        norm[sec][k] = val
    ctx = _Ctx(ctx_path, "")
    for key, val in overrides.items():
        sec, _, k = key.partition(".")
        norm[sec][k] = _typed(ctx, sec, k, val, SCHEMA[sec][k][0])
    # prompts were already resolved; keep them inline
    norm["run"]["prompts"], norm["run"]["prompts_file"] = exp.prompts, None
    return build(ctx, norm, Path("."))
