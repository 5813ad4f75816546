"""Run configuration: strict YAML loading, defaults, and object assembly.

The config is one YAML document with fixed nested sections. Unknown keys are
rejected with their dotted path (silent typos in 30+ hyperparameters are the
dominant failure mode of a tool like this). Dotted-path overrides
(``--set sampler.lambda_kl=50``) are applied before validation.
"""

import copy

import numpy as np
import yaml

from .backbone import (Backbone, GaussianMixturePrior, InterpolationSchedule,
                       ToyDecoder)
from .policy import (DEFAULT_LEXICONS, DEFAULT_PROFILES, DEFAULT_SCHEDULE_MODES,
                     IntentMixture, PolicyParams, classify_intent)
from .rewards import (FAMILIES, HpsParams, RewardBank, SemanticPrimitive,
                      VqaAnswerSpec)
from .sampler import SamplerConfig, TaskSpec


class ConfigError(ValueError):
    """Configuration problem, annotated with the offending dotted path."""


DEFAULTS = {
    "backbone": {
        "latent_dim": 2,
        "prior": {
            "components": [
                {"weight": 0.5, "mean": [-1.0, 0.0], "var": [0.6, 0.6]},
                {"weight": 0.5, "mean": [1.2, 0.8], "var": [0.4, 0.4]},
            ],
        },
        "schedule": {"kind": "linear", "t_bar": 0.85},
        "decoder": {
            "kind": "linear", "image_dim": 4, "seed": 7, "hidden_dim": None,
            "w": None, "b": None,
            "w1": None, "b1": None, "w2": None, "b2": None,
        },
    },
    "rewards": {
        "enabled": ["glb", "per", "rg", "oc", "hps", "vqa"],
        "standardize": True,
        "eps_norm": 1.0e-6,
        "feature_dim": 3,
        "encoders": {
            "glb": {"seed": 11, "matrix": None},
            "per": {"seed": 12, "matrix": None},
            "rg": {"seed": 13, "matrix": None},
            "oc": {"seed": 14, "matrix": None},
        },
        "region_map": [0, 0, 1, 1],
        "tau_rg": 0.25,
        "tau_sp": 0.5,
        "lambda_leak": 0.1,
        "hps": {"anchor": None, "scale": 1.0, "a_norm": 1.0, "b_norm": 0.0},
        "vqa": {"tokens": [1, 3, 0], "vocab_size": 5, "seed": 21,
                "margin": 1.0, "lambda_margin": 0.5},
        "lin": {"coeff": None},
    },
    "policy": {
        "beta": 2.0,
        "beta_sp": 2.0,
        "kappa_fb": 0.5,
        "kappa_sch": 0.5,
        "gamma_eta": 4.0,
        "r0": 0.0,
        "eta_min": None,            # default 0.5 * t_bar / steps
        "eta_max": None,            # default 2.0 * t_bar / steps
        "schedule_modes": dict(DEFAULT_SCHEDULE_MODES),
        "profiles": {k: dict(v) for k, v in DEFAULT_PROFILES.items()},
        "lexicons": {k: list(v) for k, v in DEFAULT_LEXICONS.items()},
    },
    "sampler": {
        "steps": 35,
        "lambda_r": 1.0,
        "lambda_kl": 1.5,
        "gamma_min": 0.001,
        "gamma_max": 0.05,
        "rho": 2.0,
        "mode": "annealed",
        "fixed_t": 0.5,
        "seed": 0,
    },
    "task": {
        "mode": "editing",
        "prompt": "add sunglasses to the person",
        "intent": None,             # {add:, remove:, style:} overrides prompt
        "z0": [0.9, 0.6],
        "z0_file": None,            # .npy path, alternative to inline z0
        "sps": [
            {
                "id": "sp0",
                "text": "add sunglasses",
                "target": [1.0, 0.5, -0.2],
                "masks": [{"mask": [1.0, 1.0, 0.0, 0.0], "confidence": 1.0}],
                "region_bias": None,
            },
        ],
    },
    "output": {
        "dir": None,
        "snapshot_stride": 0,
        "plots": False,
    },
}

# dict subtrees whose keys are data, not schema, and so are not merged
# against the defaults key-by-key
_FREE_SUBTREES = {
    ("policy", "schedule_modes"),
    ("policy", "profiles"),
    ("policy", "lexicons"),
    ("task", "intent"),
}


def _merge(defaults, user, path=()):
    if user is None:
        return copy.deepcopy(defaults)
    if not isinstance(user, dict):
        raise ConfigError(f"{'.'.join(path) or '<root>'}: expected a mapping, "
                          f"got {type(user).__name__}")
    out = {}
    for key, dval in defaults.items():
        if key in user:
            uval = user[key]
            sub = path + (key,)
            if isinstance(dval, dict) and sub not in _FREE_SUBTREES and \
                    dval and all(isinstance(v, (dict, list, str, int, float,
                                                bool, type(None)))
                                 for v in dval.values()):
                out[key] = _merge(dval, uval, sub)
            else:
                out[key] = copy.deepcopy(uval)
        else:
            out[key] = copy.deepcopy(dval)
    unknown = set(user) - set(defaults)
    if unknown:
        where = ".".join(path) or "<root>"
        raise ConfigError(f"unknown key(s) {sorted(unknown)} under {where!r}")
    return out


def apply_override(data, dotted, raw_value):
    """Set ``a.b.c=value`` into a raw config dict; value is parsed as YAML."""
    keys = dotted.split(".")
    node = data
    for key in keys[:-1]:
        node = node.setdefault(key, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override path {dotted!r} crosses a non-mapping")
    try:
        node[keys[-1]] = yaml.safe_load(raw_value)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse override value {raw_value!r}: {exc}")


def load_config(path=None, overrides=(), seed=None):
    """Load, override, merge with defaults, and validate a run config."""
    user = {}
    if path is not None:
        with open(path) as fh:
            try:
                user = yaml.safe_load(fh) or {}
            except yaml.YAMLError as exc:
                raise ConfigError(f"{path}: invalid YAML: {exc}")
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} must look like key.path=value")
        dotted, _, value = item.partition("=")
        apply_override(user, dotted.strip(), value)
    if seed is not None:
        user.setdefault("sampler", {})["seed"] = int(seed)
    return RunConfig(_merge(DEFAULTS, user))


def _matrix_from(entry, rows, cols, what):
    if entry.get("matrix") is not None:
        m = np.asarray(entry["matrix"], dtype=np.float64)
        if m.shape != (rows, cols):
            raise ConfigError(f"{what}: inline matrix must be {rows}x{cols}, "
                              f"got {m.shape}")
        return m
    if entry.get("seed") is None:
        raise ConfigError(f"{what}: provide either a seed or an inline matrix")
    rng = np.random.default_rng(int(entry["seed"]))
    return rng.standard_normal((rows, cols)) / np.sqrt(cols)


class RunConfig:
    """Validated effective configuration; builds all run objects."""

    def __init__(self, data):
        self.data = data

    def effective(self):
        """Full effective config (defaults applied) for echo/round-trip."""
        return copy.deepcopy(self.data)

    def effective_yaml(self):
        return yaml.safe_dump(self.effective(), sort_keys=True,
                              default_flow_style=None)

    # ---- builders -------------------------------------------------------

    def build_backbone(self):
        b = self.data["backbone"]
        D = int(b["latent_dim"])
        comps = b["prior"]["components"]
        if not comps:
            raise ConfigError("backbone.prior.components: need >= 1 component")
        try:
            prior = GaussianMixturePrior(
                np.array([c["weight"] for c in comps]),
                np.array([c["mean"] for c in comps]),
                np.array([c["var"] for c in comps]))
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"backbone.prior: {exc}")
        if prior.dim != D:
            raise ConfigError(f"backbone.prior: component dim {prior.dim} "
                              f"!= latent_dim {D}")
        sched = InterpolationSchedule(b["schedule"]["kind"],
                                      float(b["schedule"]["t_bar"]))
        dec = self._build_decoder(b["decoder"], D)
        return Backbone(prior, sched, dec)

    def _build_decoder(self, d, latent_dim):
        kind = d["kind"]
        P = int(d["image_dim"])
        if kind == "linear" and d["w"] is not None:
            w = np.asarray(d["w"], dtype=np.float64)
            b = (np.zeros(w.shape[0]) if d["b"] is None
                 else np.asarray(d["b"], dtype=np.float64))
            if w.shape != (P, latent_dim):
                raise ConfigError(f"backbone.decoder.w must be {P}x{latent_dim}")
            return ToyDecoder("linear", {"w": w, "b": b})
        if kind == "one_hidden_tanh" and d["w1"] is not None:
            weights = {k: np.asarray(d[k], dtype=np.float64)
                       for k in ("w1", "b1", "w2", "b2") if d[k] is not None}
            if set(weights) != {"w1", "b1", "w2", "b2"}:
                raise ConfigError("backbone.decoder: tanh decoder needs "
                                  "w1, b1, w2, b2 together")
            return ToyDecoder("one_hidden_tanh", weights)
        if d["seed"] is None:
            raise ConfigError("backbone.decoder: provide a seed or inline weights")
        return ToyDecoder.from_seed(kind, latent_dim, P, int(d["seed"]),
                                    d["hidden_dim"])

    def build_bank(self, backbone):
        r = self.data["rewards"]
        P = backbone.decoder.image_dim
        F = int(r["feature_dim"])
        enabled = tuple(r["enabled"])
        for fam in enabled:
            if fam not in FAMILIES:
                raise ConfigError(f"rewards.enabled: unknown family {fam!r}")
        encoders = {}
        for fam in ("glb", "per", "rg", "oc"):
            if fam in enabled:
                encoders[fam] = _matrix_from(r["encoders"][fam], F, P,
                                             f"rewards.encoders.{fam}")
        region_map = None
        if "rg" in enabled:
            region_map = np.asarray(r["region_map"], dtype=np.int64)
            if region_map.shape != (P,):
                raise ConfigError(f"rewards.region_map must have length {P}")
            if region_map.min() < 0:
                raise ConfigError("rewards.region_map: indices must be >= 0")
        hps = None
        if "hps" in enabled:
            anchor = (np.zeros(P) if r["hps"]["anchor"] is None
                      else np.asarray(r["hps"]["anchor"], dtype=np.float64))
            if anchor.shape != (P,):
                raise ConfigError(f"rewards.hps.anchor must have length {P}")
            hps = HpsParams(anchor, float(r["hps"]["scale"]),
                            float(r["hps"]["a_norm"]), float(r["hps"]["b_norm"]))
        vqa = None
        if "vqa" in enabled:
            v = r["vqa"]
            vqa = VqaAnswerSpec.from_seed(v["tokens"], int(v["vocab_size"]), P,
                                          int(v["seed"]), float(v["margin"]),
                                          float(v["lambda_margin"]))
        lin = None
        if "lin" in enabled:
            if r["lin"]["coeff"] is None:
                raise ConfigError("rewards.lin.coeff required when lin enabled")
            lin = np.asarray(r["lin"]["coeff"], dtype=np.float64)
            if lin.shape != (P,):
                raise ConfigError(f"rewards.lin.coeff must have length {P}")
        return RewardBank(enabled, encoders, region_map, float(r["tau_rg"]),
                          float(r["tau_sp"]), float(r["lambda_leak"]), hps, vqa,
                          lin, float(r["eps_norm"]), bool(r["standardize"]))

    def build_policy(self):
        p = self.data["policy"]
        s = self.data["sampler"]
        t_bar = float(self.data["backbone"]["schedule"]["t_bar"])
        steps = max(int(s["steps"]), 1)
        eta_min = (0.5 * t_bar / steps if p["eta_min"] is None
                   else float(p["eta_min"]))
        eta_max = (2.0 * t_bar / steps if p["eta_max"] is None
                   else float(p["eta_max"]))
        for fam in p["schedule_modes"]:
            if fam not in FAMILIES:
                raise ConfigError(f"policy.schedule_modes: unknown family {fam!r}")
        for intent, prof in p["profiles"].items():
            if intent not in ("add", "remove", "style"):
                raise ConfigError(f"policy.profiles: unknown intent {intent!r}")
            for fam in prof:
                if fam not in FAMILIES:
                    raise ConfigError(
                        f"policy.profiles.{intent}: unknown family {fam!r}")
        try:
            return PolicyParams(float(p["beta"]), float(p["beta_sp"]),
                                float(p["kappa_fb"]), float(p["kappa_sch"]),
                                eta_min, eta_max, float(p["gamma_eta"]),
                                float(p["r0"]), dict(p["schedule_modes"]),
                                {k: dict(v) for k, v in p["profiles"].items()})
        except ValueError as exc:
            raise ConfigError(f"policy: {exc}")

    def build_task(self, backbone, bank):
        t = self.data["task"]
        F = int(self.data["rewards"]["feature_dim"])
        P = backbone.decoder.image_dim
        sps = []
        for i, raw_sp in enumerate(t["sps"]):
            extra = set(raw_sp) - {"id", "text", "target", "masks", "region_bias"}
            if extra:
                raise ConfigError(f"task.sps[{i}]: unknown key(s) {sorted(extra)}")
            masks = []
            for j, m in enumerate(raw_sp.get("masks") or []):
                extra = set(m) - {"mask", "confidence"}
                if extra:
                    raise ConfigError(
                        f"task.sps[{i}].masks[{j}]: unknown key(s) {sorted(extra)}")
                mask = np.asarray(m["mask"], dtype=np.float64)
                if mask.shape != (P,):
                    raise ConfigError(
                        f"task.sps[{i}].masks[{j}]: mask must have length {P}")
                masks.append((mask, float(m.get("confidence", 1.0))))
            target = np.asarray(raw_sp["target"], dtype=np.float64)
            if target.shape != (F,):
                raise ConfigError(f"task.sps[{i}]: target must have length {F}")
            try:
                sps.append(SemanticPrimitive(raw_sp.get("id", f"sp{i}"),
                                             raw_sp.get("text", ""), target,
                                             masks, raw_sp.get("region_bias")))
            except ValueError as exc:
                raise ConfigError(f"task.sps[{i}]: {exc}")
        intent = None
        if t["intent"] is not None:
            extra = set(t["intent"]) - {"add", "remove", "style"}
            if extra:
                raise ConfigError(f"task.intent: unknown key(s) {sorted(extra)}")
            try:
                intent = IntentMixture(float(t["intent"].get("add", 0.0)),
                                       float(t["intent"].get("remove", 0.0)),
                                       float(t["intent"].get("style", 0.0)))
            except ValueError as exc:
                raise ConfigError(f"task.intent: {exc}")
        elif t["prompt"]:
            lex = {k: tuple(v) for k, v in
                   self.data["policy"]["lexicons"].items()}
            intent = classify_intent(t["prompt"], lex)
        z0 = None
        if t["mode"] == "editing":
            if t["z0_file"] is not None:
                z0 = np.load(t["z0_file"]).astype(np.float64)
            elif t["z0"] is not None:
                z0 = np.asarray(t["z0"], dtype=np.float64)
            else:
                raise ConfigError("task: editing mode requires z0 or z0_file")
            if z0.shape != (backbone.prior.dim,):
                raise ConfigError(
                    f"task.z0 must have length {backbone.prior.dim}")
        try:
            return TaskSpec(t["mode"], t["prompt"] or "", sps, intent, z0)
        except ValueError as exc:
            raise ConfigError(f"task: {exc}")

    def build_sampler_cfg(self):
        s = self.data["sampler"]
        out = self.data["output"]
        try:
            return SamplerConfig(int(s["steps"]), float(s["lambda_r"]),
                                 float(s["lambda_kl"]), float(s["gamma_min"]),
                                 float(s["gamma_max"]), float(s["rho"]),
                                 s["mode"], float(s["fixed_t"]), int(s["seed"]),
                                 int(out["snapshot_stride"]))
        except ValueError as exc:
            raise ConfigError(f"sampler: {exc}")

    def build(self):
        """Assemble (backbone, bank, policy, task, sampler_cfg)."""
        backbone = self.build_backbone()
        bank = self.build_bank(backbone)
        params = self.build_policy()
        task = self.build_task(backbone, bank)
        cfg = self.build_sampler_cfg()
        return backbone, bank, params, task, cfg
