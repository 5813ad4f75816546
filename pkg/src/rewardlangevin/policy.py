"""Prompt-aware adaptive controller.

Turns a prompt-level intent mixture into a base profile over reward families,
adds a regression feedback term and a noise-level schedule term, fuses
per-primitive scores into one representative per family (softmax stage one),
weights families (softmax stage two), flips the object reward by intent
direction, and maps the fused reward to a logistic step size.
"""

import re
from dataclasses import dataclass, field

import numpy as np

from .rewards import FAMILIES


class PolicyError(ValueError):
    """Invalid policy configuration or input."""


DEFAULT_SCHEDULE_MODES = {
    # localization early, semantics late
    "rg": "early", "oc": "early",
    "glb": "late", "per": "late", "hps": "late", "vqa": "late",
    "lin": "flat",
}

DEFAULT_PROFILES = {
    "add":    {"glb": 0.5, "per": 0.5, "rg": 1.0, "oc": 1.0,
               "hps": 0.5, "vqa": 0.5, "lin": 0.0},
    "remove": {"glb": 0.8, "per": 0.8, "rg": -0.5, "oc": -0.5,
               "hps": 0.5, "vqa": 0.8, "lin": 0.0},
    "style":  {"glb": 1.0, "per": 1.0, "rg": 0.0, "oc": 0.0,
               "hps": 1.0, "vqa": 0.5, "lin": 0.0},
}

DEFAULT_LEXICONS = {
    "add": ("add", "insert", "put", "place", "attach", "include", "wear"),
    "remove": ("remove", "delete", "erase", "take", "hide", "strip"),
    "style": ("style", "color", "recolor", "paint", "texture", "look",
              "tone", "vintage"),
}


@dataclass
class IntentMixture:
    """Simplex over (add, remove, style) edit intents."""

    add: float
    remove: float
    style: float

    def __post_init__(self):
        vals = (self.add, self.remove, self.style)
        if min(vals) < 0.0 or abs(sum(vals) - 1.0) > 1e-9:
            raise PolicyError(f"intent probabilities {vals} are not on the simplex")

    def as_array(self):
        return np.array([self.add, self.remove, self.style])


@dataclass
class PolicyParams:
    beta: float = 2.0              # family-stage softmax temperature
    beta_sp: float = 2.0           # SP-stage softmax temperature
    kappa_fb: float = 0.5          # feedback strength
    kappa_sch: float = 0.5         # schedule strength
    eta_min: float = 0.01
    eta_max: float = 0.05
    gamma_eta: float = 4.0         # logistic slope of the step-size map
    r0: float = 0.0                # reward threshold of the step-size map
    schedule_modes: dict = field(default_factory=lambda: dict(DEFAULT_SCHEDULE_MODES))
    profiles: dict = field(default_factory=lambda: {k: dict(v) for k, v in
                                                    DEFAULT_PROFILES.items()})

    def __post_init__(self):
        if self.beta <= 0.0 or self.beta_sp <= 0.0:
            raise PolicyError("softmax temperatures must be > 0")
        if self.kappa_fb < 0.0 or self.kappa_sch < 0.0:
            raise PolicyError("kappa_fb and kappa_sch must be >= 0")
        if not 0.0 < self.eta_min <= self.eta_max:
            raise PolicyError("need 0 < eta_min <= eta_max")
        if self.gamma_eta <= 0.0:
            raise PolicyError("gamma_eta must be > 0")
        for mode in self.schedule_modes.values():
            if mode not in ("early", "late", "flat"):
                raise PolicyError(f"unknown schedule mode {mode!r}")
        for intent in ("add", "remove", "style"):
            if intent not in self.profiles:
                raise PolicyError(f"missing base profile for intent {intent!r}")


class PolicyState:
    """Per-run mutable state: previous raw scores for the feedback term."""

    def __init__(self):
        self.prev_family_raw = {}      # family -> representative raw score
        self.prev_sp_raw = {}          # family -> array of per-SP raw scores


def base_profile(intent, profiles):
    """Convex combination of the three intent templates, per family."""
    pis = intent.as_array()
    return {fam: (pis[0] * profiles["add"].get(fam, 0.0)
                  + pis[1] * profiles["remove"].get(fam, 0.0)
                  + pis[2] * profiles["style"].get(fam, 0.0))
            for fam in FAMILIES}


def feedback_delta(prev, curr):
    """Positive part of the one-step reward decrease; 0 when no history."""
    if prev is None:
        return 0.0
    return max(0.0, prev - curr)


def schedule_term(mode, t, t_bar):
    """Linear ramp in noise level: early favors high t, late favors low t."""
    if not 0.0 <= t <= t_bar + 1e-12:
        raise PolicyError(f"time {t} outside [0, {t_bar}]")
    if mode == "early":
        return t / t_bar
    if mode == "late":
        return 1.0 - t / t_bar
    return 0.0


def _softmax(logits):
    z = logits - logits.max()
    e = np.exp(z)
    return e / e.sum()


def fuse_sp_family(scores, tau, deltas, h, params):
    """Softmax across SPs of one family; returns (representative, weights)."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size == 0:
        raise PolicyError("cannot fuse a family with no enabled SPs")
    deltas = np.asarray(deltas, dtype=np.float64)
    logits = params.beta_sp * (tau + params.kappa_fb * deltas + params.kappa_sch * h)
    weights = _softmax(np.broadcast_to(logits, scores.shape).astype(np.float64))
    return float(weights @ scores), weights


def compute_weights(families, tau, deltas, hs, params):
    """Family-stage softmax weights over the enabled families."""
    if not families:
        raise PolicyError("no enabled reward families")
    logits = np.array([params.beta * (tau[f] + params.kappa_fb * deltas[f]
                                      + params.kappa_sch * hs[f])
                       for f in families])
    w = _softmax(logits)
    return dict(zip(families, w))


def object_direction(intent):
    """Direction multiplier for the object reward: +1 add, -1 remove."""
    return intent.add - intent.remove


def step_size(r_tot, params):
    """Logistic step-size map: low reward explores, high reward refines."""
    u = -params.gamma_eta * (r_tot - params.r0)
    sig = 1.0 / (1.0 + np.exp(-u))
    return params.eta_min + (params.eta_max - params.eta_min) * sig


def classify_intent(prompt_text, lexicons=None):
    """Keyword-rule intent classifier; uniform fallback on no hit.

    Stands in for an external prompt parser: an explicit intent mixture in
    the task spec always overrides this.
    """
    lexicons = lexicons or DEFAULT_LEXICONS
    words = re.findall(r"[a-z]+", prompt_text.lower())
    hits = {intent: sum(w in kws for w in words)
            for intent, kws in ((k, set(lexicons[k])) for k in
                                ("add", "remove", "style"))}
    total = sum(hits.values())
    if total == 0:
        return IntentMixture(1 / 3, 1 / 3, 1 / 3)
    return IntentMixture(hits["add"] / total, hits["remove"] / total,
                         hits["style"] / total)
