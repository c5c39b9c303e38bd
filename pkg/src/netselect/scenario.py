"""Scenario files (YAML) and the shipped presets.

A scenario file looks like::

    name: setting1
    horizon_slots: 1200
    slot_seconds: 15
    epsilon: 7.5
    seeds: 50                 # or an explicit list of seeds
    networks:
      - {id: 1, bandwidth_mbps: 4, kind: wifi, delay: {family: constant, value: 2.0}}
    device_groups:
      - {name: all, count: 20, policy: smart_exp3}
    events:
      - {at_slot: 400, action: join, group: late}

Validation errors carry the line of the offending node.
"""
from __future__ import annotations

from importlib import resources
from pathlib import Path
from typing import Any, Dict, List, Optional

import yaml

from .core import ConfigurationError
from .engine import POLICY_NAMES, DeviceGroup, Scenario
from .environment import DelayModel, NetworkModel, ScenarioEvent

PRESETS = ("setting1", "setting2", "dynamic1", "dynamic2", "mobility",
           "robustness_1_19", "robustness_10_10", "robustness_19_1")

_TOP = {"name", "horizon_slots", "slot_seconds", "gain_scale_mbps", "epsilon", "seeds",
        "networks", "device_groups", "events"}
_NET = {"id", "bandwidth_mbps", "kind", "delay"}
_GROUP = {"name", "count", "policy", "params", "networks", "active"}
_EVENT = {"at_slot", "action", "group", "networks"}


def _line(node) -> int:
    return node.start_mark.line + 1


def _mapping(node, allowed, what) -> Dict[str, Any]:
    if not isinstance(node, yaml.MappingNode):
        raise ConfigurationError(f"{what} must be a mapping", _line(node))
    out = {}
    for k, v in node.value:
        key = k.value
        if key not in allowed:
            raise ConfigurationError(f"unknown {what} field {key!r}", _line(k))
        if key in out:
            raise ConfigurationError(f"duplicate {what} field {key!r}", _line(k))
        out[key] = v
    return out


def _sequence(node, what) -> list:
    if not isinstance(node, yaml.SequenceNode):
        raise ConfigurationError(f"{what} must be a list", _line(node))
    return node.value


def _value(node, kind, what):
    if not isinstance(node, yaml.ScalarNode):
        raise ConfigurationError(f"{what} must be a scalar", _line(node))
    raw = yaml.safe_load(yaml.serialize(node))
    try:
        if kind is int:
            if isinstance(raw, bool) or not isinstance(raw, int):
                raise ValueError
            return raw
        if kind is float:
            if isinstance(raw, bool) or not isinstance(raw, (int, float)):
                raise ValueError
            return float(raw)
        if kind is bool:
            if not isinstance(raw, bool):
                raise ValueError
            return raw
        if kind is str:
            return str(raw)
        return raw
    except ValueError:
        raise ConfigurationError(f"{what} must be {kind.__name__}, got {node.value!r}", _line(node)) from None


def _require(fields, key, node, what):
    if key not in fields:
        raise ConfigurationError(f"{what} is missing {key!r}", _line(node))
    return fields[key]


def _delay(node, slot_seconds) -> DelayModel:
    if not isinstance(node, yaml.MappingNode):
        raise ConfigurationError("delay must be a mapping", _line(node))
    fields = {k.value: v for k, v in node.value}
    family = _value(_require(fields, "family", node, "delay"), str, "delay family")
    params = {k: _value(v, float, f"delay {k}") for k, v in fields.items() if k != "family"}
    try:
        return DelayModel.make(family, slot_seconds, **params)
    except ConfigurationError as exc:
        raise ConfigurationError(str(exc), _line(node)) from None


def _int_list(node, what) -> List[int]:
    return [_value(v, int, what) for v in _sequence(node, what)]


def _anchor(msg: str, top, root) -> int:
    """Best line for a semantic error raised after parsing."""
    for key, label in (("device_groups", "group "), ("events", "event at slot "), ("networks", "network ")):
        if key in top and msg.startswith(label):
            ident = msg[len(label):].split(":")[0].split(" ")[0]
            for item in top[key].value:
                for k, v in getattr(item, "value", []):
                    if k.value in ("name", "at_slot", "id") and str(v.value) == ident:
                        return _line(item)
            return _line(top[key])
    return _line(root)


def parse_scenario(text: str, source: str = "<scenario>") -> Scenario:
    try:
        root = yaml.compose(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigurationError(f"{source}: {exc}", mark.line + 1 if mark else None) from None
    if root is None:
        raise ConfigurationError(f"{source}: empty scenario file", 1)
    top = _mapping(root, _TOP, "scenario")
    slot_seconds = _value(top["slot_seconds"], float, "slot_seconds") if "slot_seconds" in top else 15.0
    if not slot_seconds > 0:
        raise ConfigurationError("slot_seconds must be positive", _line(top["slot_seconds"]))

    networks = []
    for n in _sequence(_require(top, "networks", root, "scenario"), "networks"):
        f = _mapping(n, _NET, "network")
        delay = _delay(f["delay"], slot_seconds) if "delay" in f else DelayModel.constant(2.0, slot_seconds)
        try:
            networks.append(NetworkModel(
                id=_value(_require(f, "id", n, "network"), int, "network id"),
                bandwidth_mbps=_value(_require(f, "bandwidth_mbps", n, "network"), float, "bandwidth_mbps"),
                kind=_value(f["kind"], str, "kind") if "kind" in f else "wifi",
                delay=delay,
            ))
        except ConfigurationError as exc:
            raise ConfigurationError(str(exc), _line(n)) from None

    groups = []
    for g in _sequence(_require(top, "device_groups", root, "scenario"), "device_groups"):
        f = _mapping(g, _GROUP, "device group")
        policy = _value(f["policy"], str, "policy") if "policy" in f else "smart_exp3"
        if policy not in POLICY_NAMES:
            raise ConfigurationError(f"unknown policy {policy!r}; known: {', '.join(POLICY_NAMES)}",
                                     _line(f["policy"]))
        params = {}
        if "params" in f:
            if not isinstance(f["params"], yaml.MappingNode):
                raise ConfigurationError("params must be a mapping", _line(f["params"]))
            params = {k.value: _value(v, object, f"param {k.value}") for k, v in f["params"].value}
        count = _value(_require(f, "count", g, "device group"), int, "count")
        if count < 0:
            raise ConfigurationError("count must be non-negative", _line(f["count"]))
        groups.append(DeviceGroup(
            name=_value(_require(f, "name", g, "device group"), str, "group name"),
            count=count,
            policy=policy,
            params=params,
            networks=_int_list(f["networks"], "group networks") if "networks" in f else None,
            active=_value(f["active"], bool, "active") if "active" in f else True,
        ))

    events = []
    for e in _sequence(top["events"], "events") if "events" in top else []:
        f = _mapping(e, _EVENT, "event")
        try:
            events.append(ScenarioEvent(
                at_slot=_value(_require(f, "at_slot", e, "event"), int, "at_slot"),
                action=_value(_require(f, "action", e, "event"), str, "action"),
                group=_value(_require(f, "group", e, "event"), str, "group"),
                networks=tuple(_int_list(f["networks"], "event networks")) if "networks" in f else None,
            ))
        except ConfigurationError as exc:
            raise ConfigurationError(str(exc), _line(e)) from None

    seeds = None
    if "seeds" in top:
        node = top["seeds"]
        if isinstance(node, yaml.SequenceNode):
            seeds = _int_list(node, "seeds")
        else:
            n_seeds = _value(node, int, "seeds")
            if n_seeds < 1:
                raise ConfigurationError("seeds must be at least 1", _line(node))
            seeds = list(range(n_seeds))

    scenario = Scenario(
        name=_value(top["name"], str, "name") if "name" in top else Path(source).stem,
        networks=networks,
        device_groups=groups,
        horizon_slots=_value(top["horizon_slots"], int, "horizon_slots") if "horizon_slots" in top else 1200,
        slot_seconds=slot_seconds,
        events=events,
        gain_scale_mbps=_value(top["gain_scale_mbps"], float, "gain_scale_mbps") if "gain_scale_mbps" in top else None,
        epsilon=_value(top["epsilon"], float, "epsilon") if "epsilon" in top else 7.5,
        seeds=seeds,
    )
    try:
        scenario.validate()
    except ConfigurationError as exc:
        raise ConfigurationError(str(exc), exc.line or _anchor(str(exc), top, root)) from None
    return scenario


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise FileNotFoundError(f"cannot read scenario file {path}: {exc.strerror}") from None
    return parse_scenario(text, str(path))


def scenario_to_dict(s: Scenario) -> Dict[str, Any]:
    out: Dict[str, Any] = {
        "name": s.name,
        "horizon_slots": s.horizon_slots,
        "slot_seconds": s.slot_seconds,
        "epsilon": s.epsilon,
    }
    if s.gain_scale_mbps is not None:
        out["gain_scale_mbps"] = s.gain_scale_mbps
    if s.seeds is not None:
        out["seeds"] = list(s.seeds)
    out["networks"] = [{"id": n.id, "bandwidth_mbps": n.bandwidth_mbps, "kind": n.kind,
                        "delay": n.delay.to_dict()} for n in s.networks]
    groups = []
    for g in s.device_groups:
        d: Dict[str, Any] = {"name": g.name, "count": g.count, "policy": g.policy}
        if g.params:
            d["params"] = dict(g.params)
        if g.networks is not None:
            d["networks"] = list(g.networks)
        if not g.active:
            d["active"] = False
        groups.append(d)
    out["device_groups"] = groups
    if s.events:
        evs = []
        for e in s.events:
            d = {"at_slot": e.at_slot, "action": e.action, "group": e.group}
            if e.networks:
                d["networks"] = list(e.networks)
            evs.append(d)
        out["events"] = evs
    return out


def dump_scenario(s: Scenario) -> str:
    return yaml.safe_dump(scenario_to_dict(s), sort_keys=False, default_flow_style=None)


def preset_path(name: str):
    if name not in PRESETS:
        raise ConfigurationError(f"unknown preset {name!r}; known: {', '.join(PRESETS)}")
    return resources.files("netselect").joinpath("presets", f"{name}.scenario")


def load_preset(name: str, policy: Optional[str] = None, **overrides) -> Scenario:
    """Load a shipped preset, optionally forcing one policy on every group."""
    ref = preset_path(name)
    s = parse_scenario(ref.read_text(), f"{name}.scenario")
    if policy is not None:
        s = s.with_policy(policy)
    for key, value in overrides.items():
        setattr(s, key, value)
    s.validate()
    return s


def resolve_scenario(arg: str) -> Scenario:
    """A path to a scenario file, or the name of a preset."""
    p = Path(arg)
    if p.exists() or arg not in PRESETS:
        return load_scenario(p)
    return load_preset(arg)
