"""Scenario files: strict JSON schema parsed into Scenario objects.

Unknown keys are rejected everywhere so a typo cannot silently change a run.
Node cross-references (edge endpoints, communication links, residual demand
keys) accept either the node's name or its 1-based position in the node list.
"""

import json
from importlib import resources

import numpy as np

from .controllers import CommGraph, Controller
from .dispatch import CostModel, optimal_dispatch_lq
from .exosystem import Exosystem, RotationBlock, SinusoidMode
from .network import AreaParams, GridGraph
from .sim import AddDisturbance, DropLink, GaussianPulse, LoadStep, Scenario, stepped_demand


class ConfigError(ValueError):
    """Malformed or inconsistent scenario file."""


def _is_num(x):
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def _section(doc, where, required, optional=()):
    if not isinstance(doc, dict):
        raise ConfigError(f"{where}: expected an object")
    unknown = set(doc) - set(required) - set(optional)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    missing = [k for k in required if k not in doc]
    if missing:
        raise ConfigError(f"{where}: missing keys {missing}")
    return doc


def _number(doc, key, where, positive=False):
    v = doc.get(key)
    if not _is_num(v):
        raise ConfigError(f"{where}.{key}: expected a number")
    v = float(v)
    if positive and v <= 0:
        raise ConfigError(f"{where}.{key}: must be positive")
    return v


def _num_list(v, n, where):
    if not isinstance(v, list) or len(v) != n or not all(_is_num(x) for x in v):
        raise ConfigError(f"{where}: expected a list of {n} numbers")
    return np.asarray([float(x) for x in v])


def _node_index(ref, names, where):
    if isinstance(ref, str):
        if ref not in names:
            raise ConfigError(f"{where}: unknown node name {ref!r}")
        return names[ref]
    if isinstance(ref, int) and not isinstance(ref, bool):
        if not 1 <= ref <= len(names):
            raise ConfigError(f"{where}: node index {ref} outside 1..{len(names)}")
        return ref - 1
    raise ConfigError(f"{where}: node references are names or 1-based indices")


_NODE_FIELDS = ("M", "A", "T_do", "X_d", "X_dp", "E_f", "B_self", "q")


def _parse_network(doc):
    net = _section(doc, "network", ("nodes", "edges"))
    nodes = net["nodes"]
    if not isinstance(nodes, list) or not nodes:
        raise ConfigError("network.nodes: expected a nonempty list")
    names = {}
    cols = {k: [] for k in _NODE_FIELDS}
    rlin = []
    for i, nd in enumerate(nodes):
        where = f"network.nodes[{i}]"
        _section(nd, where, ("name",) + _NODE_FIELDS, ("r",))
        name = nd["name"]
        if not isinstance(name, str) or not name:
            raise ConfigError(f"{where}.name: expected a nonempty string")
        if name in names:
            raise ConfigError(f"{where}.name: duplicate node name {name!r}")
        names[name] = i
        for k in _NODE_FIELDS:
            cols[k].append(_number(nd, k, where))
        rlin.append(_number(nd, "r", where) if "r" in nd else 0.0)
    n = len(nodes)
    edges = net["edges"]
    if not isinstance(edges, list):
        raise ConfigError("network.edges: expected a list")
    edge_list = []
    for k, ed in enumerate(edges):
        where = f"network.edges[{k}]"
        _section(ed, where, ("from", "to", "B"))
        i = _node_index(ed["from"], names, where + ".from")
        j = _node_index(ed["to"], names, where + ".to")
        edge_list.append((i, j, _number(ed, "B", where, positive=True)))
    try:
        g = GridGraph(n, edge_list, cols["B_self"])
        p = AreaParams(
            M=cols["M"], A=cols["A"], T_do=cols["T_do"],
            X_d=cols["X_d"], X_dp=cols["X_dp"], E_f=cols["E_f"],
        )
    except ValueError as exc:
        raise ConfigError(f"network: {exc}") from exc
    q = np.asarray(cols["q"])
    r = np.asarray(rlin)
    try:
        cost = CostModel(q, r=r if np.any(r != 0.0) else None)
    except ValueError as exc:
        raise ConfigError(f"network: {exc}") from exc
    return g, p, cost, names


def _parse_mode(doc, where):
    _section(doc, where, ("amplitude",), ("freq_rad", "freq_hz", "period_s", "phase_rad"))
    keys = [k for k in ("freq_rad", "freq_hz", "period_s") if k in doc]
    if len(keys) != 1:
        raise ConfigError(f"{where}: give exactly one of freq_rad, freq_hz, period_s")
    val = _number(doc, keys[0], where, positive=True)
    if keys[0] == "freq_rad":
        omega = val
    elif keys[0] == "freq_hz":
        omega = 2.0 * np.pi * val
    else:
        omega = 2.0 * np.pi / val
    amp = _number(doc, "amplitude", where)
    if amp < 0:
        raise ConfigError(f"{where}.amplitude: must be nonnegative")
    phase = _number(doc, "phase_rad", where) if "phase_rad" in doc else 0.0
    return SinusoidMode(omega_rad=omega, amplitude=amp, phase_rad=phase)


def _parse_mode_list(v, where):
    if not isinstance(v, list) or not v:
        raise ConfigError(f"{where}: expected a nonempty list of modes")
    return [_parse_mode(mode, f"{where}[{i}]") for i, mode in enumerate(v)]


def _parse_common(doc, n, where):
    _section(doc, where, ("modes",), ("injection", "injection_check"))
    if "injection_check" in doc and doc["injection_check"] != "auto":
        raise ConfigError(f'{where}.injection_check: only "auto" is supported')
    block = RotationBlock.from_modes(_parse_mode_list(doc["modes"], where + ".modes"))
    injection = None
    if "injection" in doc:
        injection = _num_list(doc["injection"], n, where + ".injection")
    return block, injection


def _parse_residual(doc, names, where):
    if not isinstance(doc, dict):
        raise ConfigError(f"{where}: expected an object keyed by node")
    blocks = [None] * len(names)
    for ref, modes in doc.items():
        i = _node_index(ref, names, where)
        if blocks[i] is not None:
            raise ConfigError(f"{where}: node {ref!r} listed twice")
        blocks[i] = RotationBlock.from_modes(_parse_mode_list(modes, f"{where}[{ref!r}]"))
    return tuple(blocks)


def _parse_demand(doc, names, cost):
    n = len(names)
    dem = _section(doc, "demand", ("constant",), ("common", "residual"))
    constant = _num_list(dem["constant"], n, "demand.constant")
    common, injection = (None, None)
    if "common" in dem:
        common, injection = _parse_common(dem["common"], n, "demand.common")
    residual = ()
    if "residual" in dem:
        residual = _parse_residual(dem["residual"], names, "demand.residual")
    return Exosystem(
        constant=constant, common=common, common_injection=injection, residual=residual
    )


def _parse_events(items, names, cost, n):
    if not isinstance(items, list):
        raise ConfigError("events: expected a list")
    events = []
    for k, ev in enumerate(items):
        where = f"events[{k}]"
        if not isinstance(ev, dict) or "action" not in ev or "t" not in ev:
            raise ConfigError(f"{where}: expected an object with t and action")
        action = ev["action"]
        t = _number(ev, "t", where)
        if action == "load_step":
            _section(ev, where, ("t", "action", "constant"), ("common", "residual"))
            kw = {}
            if "common" in ev:
                block, injection = _parse_common(ev["common"], n, where + ".common")
                if injection is not None:
                    raise ConfigError(f"{where}.common: injection cannot change mid-run")
                kw["common"] = block
            if "residual" in ev:
                kw["residual"] = _parse_residual(ev["residual"], names, where + ".residual")
            events.append(
                LoadStep(t=t, constant=_num_list(ev["constant"], n, where + ".constant"), **kw)
            )
        elif action == "drop_link":
            _section(ev, where, ("t", "action", "link"))
            link = ev["link"]
            if not isinstance(link, list) or len(link) != 2:
                raise ConfigError(f"{where}.link: expected [node, node]")
            events.append(
                DropLink(
                    t=t,
                    link=(
                        _node_index(link[0], names, where + ".link"),
                        _node_index(link[1], names, where + ".link"),
                    ),
                )
            )
        elif action == "add_disturbance":
            _section(ev, where, ("t", "action", "profile"))
            prof = _section(ev["profile"], where + ".profile", ("type", "t0", "tau", "amplitude"))
            if prof["type"] != "gaussian_pulse":
                raise ConfigError(f'{where}.profile.type: only "gaussian_pulse" is supported')
            events.append(
                AddDisturbance(
                    t=t,
                    pulse=GaussianPulse(
                        t0=_number(prof, "t0", where + ".profile"),
                        tau=_number(prof, "tau", where + ".profile", positive=True),
                        amplitude=_num_list(prof["amplitude"], n, where + ".profile.amplitude"),
                    ),
                )
            )
        else:
            raise ConfigError(f"{where}.action: unknown action {action!r}")
    return tuple(events)


def _controller_blocks(exo, events):
    """Demand blocks the controller must replicate: first appearance wins."""
    common = exo.common
    residual = list(exo.residual)
    stage = exo
    for ev in events:
        if isinstance(ev, LoadStep):
            stage = stepped_demand(stage, ev)
            if common is None:
                common = stage.common
            for i, blk in enumerate(stage.residual):
                if residual[i] is None:
                    residual[i] = blk
    return common, tuple(residual)


def _parse_controller(doc, cost, comm, exo, events):
    ctl = _section(doc, "controller", ("variant",), ("gains", "u_fixed"))
    variant = ctl["variant"]
    if variant not in Controller.VARIANTS:
        raise ConfigError(f"controller.variant: unknown variant {variant!r}")
    n = cost.n
    gains = _section(ctl.get("gains", {}), "controller.gains", (), ("alpha", "beta1", "beta2", "beta3"))
    alpha = _number(gains, "alpha", "controller.gains", positive=True) if "alpha" in gains else 1.0
    beta1 = _number(gains, "beta1", "controller.gains", positive=True) if "beta1" in gains else 1.0
    beta2 = _number(gains, "beta2", "controller.gains", positive=True) if "beta2" in gains else 1.0
    beta3 = None
    if "beta3" in gains:
        v = gains["beta3"]
        beta3 = np.full(n, float(v)) if _is_num(v) else _num_list(v, n, "controller.gains.beta3")
    u_fixed = None
    if variant == "none":
        if "u_fixed" in ctl:
            u_fixed = _num_list(ctl["u_fixed"], n, "controller.u_fixed")
        else:
            u_fixed = optimal_dispatch_lq(cost, exo.constant).u
    elif "u_fixed" in ctl:
        raise ConfigError("controller.u_fixed: only valid for variant 'none'")
    common, residual = _controller_blocks(exo, events)
    try:
        return Controller(
            variant,
            cost,
            comm,
            alpha=alpha,
            beta1=beta1,
            beta2=beta2,
            beta3=beta3,
            common_block=common if variant in ("common", "wide") else None,
            residual_blocks=residual if variant == "wide" else None,
            u_fixed=u_fixed,
        )
    except ValueError as exc:
        raise ConfigError(f"controller: {exc}") from exc


def _parse_initial(doc, n):
    init = _section(doc, "initial", ("policy",), ("delta", "omega", "V", "theta1"))
    policy = init["policy"]
    if policy not in ("equilibrium", "perturbed"):
        raise ConfigError(f"initial.policy: unknown policy {policy!r}")
    offsets = {}
    for key in ("delta", "omega", "V", "theta1"):
        if key in init:
            if policy != "perturbed":
                raise ConfigError("initial: offsets require policy 'perturbed'")
            offsets[key] = _num_list(init[key], n, f"initial.{key}")
    return policy, offsets or None


def parse_scenario(doc):
    """Build a Scenario from a parsed JSON document."""
    _section(
        doc,
        "scenario",
        ("network", "demand", "controller"),
        ("comm", "events", "integrator", "initial", "name"),
    )
    g, p, cost, names = _parse_network(doc["network"])
    n = g.n
    exo = _parse_demand(doc["demand"], names, cost)
    comm = None
    if "comm" in doc:
        cfg = _section(doc["comm"], "comm", ("links",))
        links = cfg["links"]
        if not isinstance(links, list):
            raise ConfigError("comm.links: expected a list of node pairs")
        pairs = []
        for k, ln in enumerate(links):
            if not isinstance(ln, list) or len(ln) != 2:
                raise ConfigError(f"comm.links[{k}]: expected [node, node]")
            pairs.append(
                (
                    _node_index(ln[0], names, f"comm.links[{k}]"),
                    _node_index(ln[1], names, f"comm.links[{k}]"),
                )
            )
        try:
            comm = CommGraph(n, pairs)
        except ValueError as exc:
            raise ConfigError(f"comm: {exc}") from exc
    events = _parse_events(doc.get("events", []), names, cost, n)
    ctrl = _parse_controller(doc["controller"], cost, comm, exo, events)
    integ = _section(doc.get("integrator", {}), "integrator", (), ("dt", "t_end", "stride"))
    dt = _number(integ, "dt", "integrator", positive=True) if "dt" in integ else 1e-3
    t_end = _number(integ, "t_end", "integrator") if "t_end" in integ else 100.0
    stride = integ.get("stride", 100)
    if not isinstance(stride, int) or isinstance(stride, bool) or stride < 1:
        raise ConfigError("integrator.stride: expected a positive integer")
    policy, offsets = ("equilibrium", None)
    if "initial" in doc:
        policy, offsets = _parse_initial(doc["initial"], n)
    name = doc.get("name", "")
    if not isinstance(name, str):
        raise ConfigError("name: expected a string")
    return Scenario(
        grid=g,
        params=p,
        cost=cost,
        exo=exo,
        controller=ctrl,
        events=events,
        dt=dt,
        t_end=t_end,
        stride=stride,
        initial_policy=policy,
        initial_offsets=offsets,
        name=name,
    )


def load_scenario(path):
    """Parse the scenario file at ``path``."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
    return parse_scenario(doc)


def packaged_scenario_path(name):
    """Filesystem path of a scenario shipped with the package."""
    base = resources.files("gridreg") / "scenarios" / f"{name}.json"
    if not base.is_file():
        raise ConfigError(f"no packaged scenario named {name!r}")
    return str(base)
