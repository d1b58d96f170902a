"""Run configuration: scheme, sizes, thresholds, adversary and seed.

Config files are INI-style (``key = value`` under sections) or JSON with the
same section layout::

    [lottery]
    scheme = bb84            ; bb84 | entangled | semiquantum
    participants = 5
    seed = 42
    reward_policy = distance ; exact | distance | distance-literal
    retries = 1
    credential_failures =    ; comma-separated participant indices

    [widths]
    tid = 256
    pid = 256
    signature_length = 2048
    qkd_raw = 1536
    sqkd_raw = 3072
    bell_pairs = 256
    qkd_sample = 128

    [thresholds]
    signature_mismatch = 0.05
    qber_abort = 0.11
    anticorrelation = 0.05
    min_pass_fraction = 0.25

    [adversary]
    attack = none            ; see Attack
    target =                 ; participant index, empty = all (intercept-resend) or 0
    authority = LAT1         ; LAT1 | LAT2 | both
    fraction = 1.0
    basis = random           ; random | z
"""

from __future__ import annotations

import configparser
import enum
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Optional

from .tickets import RewardPolicy

SECURE_WIDTH = 256


class ConfigError(ValueError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


class Scheme(enum.Enum):
    BB84 = "bb84"
    ENTANGLED = "entangled"
    SEMIQUANTUM = "semiquantum"


class Attack(enum.Enum):
    NONE = "none"
    INTERCEPT_RESEND = "intercept-resend"
    FORGE_DECLARATION = "forge-declaration"
    POST_HOC_TID_SWAP = "post-hoc-swap"
    SINGLE_AUTHORITY_OPEN = "single-authority-open"
    LATE_TICKET = "late-ticket"
    CORRUPT_AUTHORITY = "corrupt-authority"


@dataclass(frozen=True)
class AdversaryConfig:
    """At most one attack per run.

    ``target`` is a participant index; ``None`` means every participant for
    intercept-resend and participant 0 otherwise. ``authority`` names the
    attacked channel end (``both`` for both channels) or the acting authority.
    """

    attack: Attack = Attack.NONE
    target: Optional[int] = None
    authority: str = "LAT1"
    fraction: float = 1.0
    basis: str = "random"

    def to_dict(self) -> dict[str, Any]:
        return {
            "attack": self.attack.value,
            "target": self.target,
            "authority": self.authority,
            "fraction": self.fraction,
            "basis": self.basis,
        }


@dataclass(frozen=True)
class RunConfig:
    scheme: Scheme = Scheme.BB84
    n_participants: int = 5
    master_seed: int = 0
    reward_policy: RewardPolicy = RewardPolicy.DISTANCE_PROPORTIONAL
    retries: int = 1
    credential_failures: tuple[int, ...] = ()

    tid_width: int = SECURE_WIDTH
    pid_width: int = SECURE_WIDTH
    signature_length: int = 2048
    qkd_raw: int = 1536
    sqkd_raw: int = 3072
    bell_pairs: int = 256
    qkd_sample: int = 128

    signature_threshold: float = 0.05
    qber_abort: float = 0.11
    anticorrelation_abort: float = 0.05
    min_pass_fraction: float = 0.25

    adversary: AdversaryConfig = field(default_factory=AdversaryConfig)

    @property
    def non_secure(self) -> bool:
        return self.tid_width < SECURE_WIDTH or self.pid_width < SECURE_WIDTH

    def with_width(self, width: int) -> RunConfig:
        return replace(self, tid_width=width, pid_width=width)

    def validate(self) -> RunConfig:
        positive = {
            "lottery.participants": self.n_participants,
            "widths.tid": self.tid_width,
            "widths.pid": self.pid_width,
            "widths.signature_length": self.signature_length,
            "widths.qkd_raw": self.qkd_raw,
            "widths.sqkd_raw": self.sqkd_raw,
            "widths.bell_pairs": self.bell_pairs,
            "widths.qkd_sample": self.qkd_sample,
        }
        for name, value in positive.items():
            if not isinstance(value, int) or isinstance(value, bool) or value <= 0:
                raise ConfigError(name, f"must be a positive integer, got {value!r}")
        thresholds = {
            "thresholds.signature_mismatch": self.signature_threshold,
            "thresholds.qber_abort": self.qber_abort,
            "thresholds.anticorrelation": self.anticorrelation_abort,
            "thresholds.min_pass_fraction": self.min_pass_fraction,
            "adversary.fraction": self.adversary.fraction,
        }
        for name, value in thresholds.items():
            if not 0.0 <= value <= 1.0:
                raise ConfigError(name, f"must be in [0, 1], got {value}")
        if self.retries < 0:
            raise ConfigError("lottery.retries", "must be >= 0")
        if not 0 <= self.master_seed < 2**64:
            raise ConfigError("lottery.seed", "must fit in an unsigned 64-bit integer")
        if self.pid_width < 64 and self.n_participants > 2 ** (self.pid_width - 1):
            raise ConfigError("widths.pid", "too narrow for the number of participants")
        if self.scheme is Scheme.ENTANGLED:
            if self.tid_width % 2:
                raise ConfigError("widths.tid", "must be even for two-bit entangled blocks")
            if self.bell_pairs // 2 < self.tid_width // 2:
                raise ConfigError("widths.bell_pairs", "too few pairs survive the check to carry the TID")
        for idx in self.credential_failures:
            if not 0 <= idx < self.n_participants:
                raise ConfigError("lottery.credential_failures", f"unknown participant {idx}")
        adv = self.adversary
        if adv.authority not in ("LAT1", "LAT2", "both"):
            raise ConfigError("adversary.authority", f"unknown authority {adv.authority!r}")
        if adv.basis not in ("random", "z"):
            raise ConfigError("adversary.basis", f"unknown basis policy {adv.basis!r}")
        if adv.target is not None and not 0 <= adv.target < self.n_participants:
            raise ConfigError("adversary.target", f"unknown participant {adv.target}")
        return self

    def to_dict(self) -> dict[str, dict[str, Any]]:
        return {
            "lottery": {
                "scheme": self.scheme.value,
                "participants": self.n_participants,
                "seed": self.master_seed,
                "reward_policy": self.reward_policy.value,
                "retries": self.retries,
                "credential_failures": list(self.credential_failures),
            },
            "widths": {
                "tid": self.tid_width,
                "pid": self.pid_width,
                "signature_length": self.signature_length,
                "qkd_raw": self.qkd_raw,
                "sqkd_raw": self.sqkd_raw,
                "bell_pairs": self.bell_pairs,
                "qkd_sample": self.qkd_sample,
            },
            "thresholds": {
                "signature_mismatch": self.signature_threshold,
                "qber_abort": self.qber_abort,
                "anticorrelation": self.anticorrelation_abort,
                "min_pass_fraction": self.min_pass_fraction,
            },
            "adversary": self.adversary.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict[str, dict[str, Any]]) -> RunConfig:
        known = {"lottery", "widths", "thresholds", "adversary"}
        for section in data:
            if section not in known:
                raise ConfigError(section, "unknown section")
        lot = dict(data.get("lottery", {}))
        wid = dict(data.get("widths", {}))
        thr = dict(data.get("thresholds", {}))
        adv = dict(data.get("adversary", {}))
        d = cls()

        def take(section: dict, key: str, conv, default, name: str):
            if key not in section or section[key] in ("", None):
                section.pop(key, None)
                return default
            raw = section.pop(key)
            try:
                return conv(raw)
            except (TypeError, ValueError) as exc:
                raise ConfigError(name, f"cannot parse {raw!r}") from exc

        def integer(v):
            if isinstance(v, bool):
                raise ValueError(v)
            if isinstance(v, float):
                if not v.is_integer():
                    raise ValueError(v)
                return int(v)
            return int(str(v).strip(), 0)

        def indices(v):
            if isinstance(v, (list, tuple)):
                return tuple(integer(x) for x in v)
            return tuple(integer(x) for x in str(v).split(",") if x.strip())

        cfg = cls(
            scheme=take(lot, "scheme", lambda v: Scheme(str(v).strip().lower()), d.scheme, "lottery.scheme"),
            n_participants=take(lot, "participants", integer, d.n_participants, "lottery.participants"),
            master_seed=take(lot, "seed", integer, d.master_seed, "lottery.seed"),
            reward_policy=take(lot, "reward_policy", lambda v: RewardPolicy(str(v).strip()), d.reward_policy, "lottery.reward_policy"),
            retries=take(lot, "retries", integer, d.retries, "lottery.retries"),
            credential_failures=take(lot, "credential_failures", indices, (), "lottery.credential_failures"),
            tid_width=take(wid, "tid", integer, d.tid_width, "widths.tid"),
            pid_width=take(wid, "pid", integer, d.pid_width, "widths.pid"),
            signature_length=take(wid, "signature_length", integer, d.signature_length, "widths.signature_length"),
            qkd_raw=take(wid, "qkd_raw", integer, d.qkd_raw, "widths.qkd_raw"),
            sqkd_raw=take(wid, "sqkd_raw", integer, d.sqkd_raw, "widths.sqkd_raw"),
            bell_pairs=take(wid, "bell_pairs", integer, d.bell_pairs, "widths.bell_pairs"),
            qkd_sample=take(wid, "qkd_sample", integer, d.qkd_sample, "widths.qkd_sample"),
            signature_threshold=take(thr, "signature_mismatch", float, d.signature_threshold, "thresholds.signature_mismatch"),
            qber_abort=take(thr, "qber_abort", float, d.qber_abort, "thresholds.qber_abort"),
            anticorrelation_abort=take(thr, "anticorrelation", float, d.anticorrelation_abort, "thresholds.anticorrelation"),
            min_pass_fraction=take(thr, "min_pass_fraction", float, d.min_pass_fraction, "thresholds.min_pass_fraction"),
            adversary=AdversaryConfig(
                attack=take(adv, "attack", lambda v: Attack(str(v).strip().lower()), Attack.NONE, "adversary.attack"),
                target=take(adv, "target", integer, None, "adversary.target"),
                authority=take(adv, "authority", lambda v: str(v).strip(), "LAT1", "adversary.authority"),
                fraction=take(adv, "fraction", float, 1.0, "adversary.fraction"),
                basis=take(adv, "basis", lambda v: str(v).strip().lower(), "random", "adversary.basis"),
            ),
        )
        for section_name, rest in (("lottery", lot), ("widths", wid), ("thresholds", thr), ("adversary", adv)):
            for key in rest:
                raise ConfigError(f"{section_name}.{key}", "unknown key")
        return cfg.validate()


def parse_config(text: str) -> RunConfig:
    """Parse INI or JSON config text."""
    stripped = text.lstrip()
    if stripped.startswith("{"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError("<file>", f"invalid JSON: {exc}") from exc
        if not isinstance(data, dict) or not all(isinstance(v, dict) for v in data.values()):
            raise ConfigError("<file>", "JSON config must map section names to objects")
        return RunConfig.from_dict(data)
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("<file>", str(exc)) from exc
    return RunConfig.from_dict({s: dict(parser[s]) for s in parser.sections()})


def load_config(path) -> RunConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))
