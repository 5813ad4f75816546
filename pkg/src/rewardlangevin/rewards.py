"""Differentiable toy reward heads and running standardization.

Six reward families mirror the guidance objectives on toy "image" vectors:

- ``glb`` / ``per``: cosine similarity between an encoded image and a target
  embedding, with independent encoder matrices.
- ``rg``: per-region cosine scores softly pooled with a temperature softmax.
- ``oc``: mask-weighted cosine alignment minus a leakage penalty on the mask
  complement.
- ``hps``: fixed-normalized negative squared distance to a preference anchor.
- ``vqa``: negated length-normalized cross-entropy plus margin hinge over
  answer-token logits that are linear in the image.

A seventh family, ``lin`` (a bare linear functional of the image), exists for
verification runs where the tilted stationary density must stay conjugate.

Every head returns an exact analytic gradient with respect to the image; the
finite-difference harness in :mod:`rewardlangevin.oracle` cross-checks all of
them.
"""

from dataclasses import dataclass, field

import numpy as np

FAMILIES = ("glb", "per", "rg", "oc", "hps", "vqa", "lin")
SP_FAMILIES = ("glb", "per", "rg", "oc")
PROMPT_FAMILIES = ("hps", "vqa", "lin")

DEFAULT_EPS_NORM = 1e-6
VQA_MAX_ANSWER_LEN = 70


class RewardError(ValueError):
    """Invalid reward configuration or input."""


@dataclass
class SemanticPrimitive:
    """One atomic sub-instruction with its target embedding and masks."""

    id: str
    text: str = ""
    target: np.ndarray = None          # (F,) image-feature vector
    masks: list = field(default_factory=list)        # [(mask (P,), confidence)]
    region_bias: np.ndarray = None     # optional per-region pooling bias

    def __post_init__(self):
        self.target = np.asarray(self.target, dtype=np.float64)
        if np.linalg.norm(self.target) == 0.0:
            raise RewardError(f"SP {self.id!r}: target embedding has zero norm")
        checked = []
        for mask, conf in self.masks:
            mask = np.asarray(mask, dtype=np.float64)
            if np.any(mask < 0.0) or np.any(mask > 1.0):
                raise RewardError(f"SP {self.id!r}: mask entries must lie in [0, 1]")
            checked.append((mask, float(conf)))
        self.masks = checked
        if self.region_bias is not None:
            self.region_bias = np.asarray(self.region_bias, dtype=np.float64)


@dataclass
class HpsParams:
    """Preference head: anchor, quadratic scale, fixed affine normalization."""

    anchor: np.ndarray
    scale: float = 1.0
    a_norm: float = 1.0
    b_norm: float = 0.0

    def __post_init__(self):
        self.anchor = np.asarray(self.anchor, dtype=np.float64)
        if self.scale <= 0.0:
            raise RewardError("preference scale must be > 0")


@dataclass
class VqaAnswerSpec:
    """Answer-token sequence and per-position linear logit maps."""

    tokens: np.ndarray       # (T,) int token indices
    vocab_size: int
    logit_weights: np.ndarray   # (T, V, P)
    logit_biases: np.ndarray    # (T, V)
    margin: float = 1.0
    margin_weight: float = 0.5

    def __post_init__(self):
        self.tokens = np.asarray(self.tokens, dtype=np.int64)
        self.logit_weights = np.asarray(self.logit_weights, dtype=np.float64)
        self.logit_biases = np.asarray(self.logit_biases, dtype=np.float64)
        T = len(self.tokens)
        if T < 1:
            raise RewardError("VQA answer must have at least one token")
        if T > VQA_MAX_ANSWER_LEN:
            raise RewardError(
                f"VQA answer length {T} exceeds the cap of {VQA_MAX_ANSWER_LEN}")
        if np.any(self.tokens < 0) or np.any(self.tokens >= self.vocab_size):
            raise RewardError("VQA answer token out of vocabulary range")
        if self.logit_weights.shape[:2] != (T, self.vocab_size):
            raise RewardError("VQA logit weights must have shape (T, V, P)")
        if self.logit_biases.shape != (T, self.vocab_size):
            raise RewardError("VQA logit biases must have shape (T, V)")
        if self.margin < 0.0 or self.margin_weight < 0.0:
            raise RewardError("VQA margin and margin weight must be >= 0")

    @classmethod
    def from_seed(cls, tokens, vocab_size, image_dim, seed, margin=1.0,
                  margin_weight=0.5):
        rng = np.random.default_rng(seed)
        T = len(tokens)
        w = rng.standard_normal((T, vocab_size, image_dim)) / np.sqrt(image_dim)
        b = 0.1 * rng.standard_normal((T, vocab_size))
        return cls(tokens, vocab_size, w, b, margin, margin_weight)


class RunningStats:
    """Streaming mean/variance (Welford). Single writer per sampling run."""

    __slots__ = ("count", "mean", "m2")

    def __init__(self):
        self.count = 0
        self.mean = 0.0
        self.m2 = 0.0

    def push(self, x):
        self.count += 1
        delta = x - self.mean
        self.mean += delta / self.count
        self.m2 += delta * (x - self.mean)

    @property
    def std(self):
        if self.count == 0:
            return 0.0
        return np.sqrt(self.m2 / self.count)


def standardize(stats, raw, eps_norm=DEFAULT_EPS_NORM):
    """Update running stats with ``raw``, then return the standardized value.

    Update-then-read keeps the first step well defined: the first observation
    standardizes to exactly 0.
    """
    stats.push(raw)
    return (raw - stats.mean) / (stats.std + eps_norm)


def _cosine_vjp(encoder, x, target):
    """cos(E x, target) and its gradient w.r.t. x.

    Zero-norm encoded input yields score 0 with gradient 0 (degenerate case,
    not an error: Langevin noise may momentarily produce near-zero features).
    """
    u = encoder @ x
    nu = np.linalg.norm(u)
    ng = np.linalg.norm(target)
    if nu == 0.0 or ng == 0.0:
        return 0.0, np.zeros_like(x)
    val = float(u @ target) / (nu * ng)
    dval_du = target / (nu * ng) - val * u / (nu * nu)
    return val, encoder.T @ dval_du


class RewardBank:
    """All enabled reward heads for one run, sharing encoder configuration."""

    def __init__(self, enabled, encoders=None, region_map=None, tau_rg=0.25,
                 tau_sp=0.5, lambda_leak=0.1, hps=None, vqa=None,
                 lin_coeff=None, eps_norm=DEFAULT_EPS_NORM, standardize=True):
        self.enabled = tuple(enabled)
        for fam in self.enabled:
            if fam not in FAMILIES:
                raise RewardError(f"unknown reward family {fam!r}")
        self.encoders = {k: np.asarray(v, dtype=np.float64)
                         for k, v in (encoders or {}).items()}
        self.region_map = (None if region_map is None
                           else np.asarray(region_map, dtype=np.int64))
        if tau_rg <= 0.0 or tau_sp <= 0.0:
            raise RewardError("pooling temperatures must be > 0")
        if lambda_leak < 0.0:
            raise RewardError("leakage coefficient must be >= 0")
        self.tau_rg = tau_rg
        self.tau_sp = tau_sp
        self.lambda_leak = lambda_leak
        self.hps = hps
        self.vqa = vqa
        self.lin_coeff = (None if lin_coeff is None
                          else np.asarray(lin_coeff, dtype=np.float64))
        self.eps_norm = eps_norm
        self.standardize_enabled = standardize
        for fam in self.enabled:
            if fam in ("glb", "per", "rg", "oc") and fam not in self.encoders:
                raise RewardError(f"family {fam!r} enabled but no encoder configured")
        if "rg" in self.enabled and self.region_map is None:
            raise RewardError("rg family enabled but no region map configured")
        if "hps" in self.enabled and self.hps is None:
            raise RewardError("hps family enabled but not configured")
        if "vqa" in self.enabled and self.vqa is None:
            raise RewardError("vqa family enabled but not configured")
        if "lin" in self.enabled and self.lin_coeff is None:
            raise RewardError("lin family enabled but no coefficient configured")

    def new_stats(self):
        """Fresh running statistics, one per enabled family, reset per run."""
        return {fam: RunningStats() for fam in self.enabled}

    # ---- SP-level heads -------------------------------------------------

    def reward_glb(self, image, sp):
        return _cosine_vjp(self.encoders["glb"], image, sp.target)

    def reward_per(self, image, sp):
        return _cosine_vjp(self.encoders["per"], image, sp.target)

    def reward_rg(self, image, sp):
        """Temperature-pooled per-region cosine scores."""
        enc = self.encoders["rg"]
        n_regions = int(self.region_map.max()) + 1
        scores = np.zeros(n_regions)
        grads = [None] * n_regions
        for m in range(n_regions):
            sel = self.region_map == m
            if not np.any(sel):
                grads[m] = np.zeros_like(image)
                continue
            masked = np.where(sel, image, 0.0)
            s_m, g_m = _cosine_vjp(enc, masked, sp.target)
            scores[m] = s_m
            grads[m] = np.where(sel, g_m, 0.0)
        logits = scores.copy()
        if sp.region_bias is not None:
            logits = logits + sp.region_bias
        logits = logits / self.tau_rg
        logits -= logits.max()
        attn = np.exp(logits)
        attn /= attn.sum()
        value = float(attn @ scores)
        grad = np.zeros_like(image)
        for m in range(n_regions):
            coeff = attn[m] * (1.0 + (scores[m] - value) / self.tau_rg)
            grad += coeff * grads[m]
        return value, grad

    def reward_oc(self, image, sp):
        """Confidence-weighted masked alignment minus leakage penalty."""
        if not sp.masks:
            raise RewardError(f"SP {sp.id!r}: object reward requires masks")
        enc = self.encoders["oc"]
        confs = np.array([c for _, c in sp.masks])
        logits = confs / self.tau_sp
        logits -= logits.max()
        omega = np.exp(logits)
        omega /= omega.sum()
        value = 0.0
        grad = np.zeros_like(image)
        for w_j, (mask, _) in zip(omega, sp.masks):
            s_in, g_in = _cosine_vjp(enc, mask * image, sp.target)
            s_out, g_out = _cosine_vjp(enc, (1.0 - mask) * image, sp.target)
            value += w_j * (s_in - self.lambda_leak * s_out)
            grad += w_j * (mask * g_in - self.lambda_leak * (1.0 - mask) * g_out)
        return value, grad

    # ---- prompt-level heads ---------------------------------------------

    def reward_hps(self, image):
        diff = image - self.hps.anchor
        raw = -float(diff @ diff) / self.hps.scale
        value = self.hps.a_norm * raw + self.hps.b_norm
        grad = -(2.0 * self.hps.a_norm / self.hps.scale) * diff
        return value, grad

    def reward_vqa(self, image):
        """Negated length-normalized cross-entropy plus margin hinge.

        Always <= 0; approaches 0 only as every answer token becomes certain
        with an inactive hinge.
        """
        spec = self.vqa
        T = len(spec.tokens)
        total = 0.0
        grad = np.zeros_like(image)
        for t in range(T):
            a = spec.tokens[t]
            logits = spec.logit_weights[t] @ image + spec.logit_biases[t]
            mx = logits.max()
            lse = mx + np.log(np.sum(np.exp(logits - mx)))
            ce = lse - logits[a]
            probs = np.exp(logits - lse)
            dlogits = probs.copy()
            dlogits[a] -= 1.0          # grad of ce
            others = np.delete(logits, a)
            u_star = int(np.argmax(others))
            if u_star >= a:
                u_star += 1
            gap = spec.margin - logits[a] + logits[u_star]
            hinge = max(0.0, gap)
            if gap > 0.0:
                dlogits[a] -= spec.margin_weight
                dlogits[u_star] += spec.margin_weight
            total += ce + spec.margin_weight * hinge
            grad -= spec.logit_weights[t].T @ dlogits / T
        return -total / T, grad

    def reward_lin(self, image):
        return float(self.lin_coeff @ image), self.lin_coeff.copy()

    # ---- dispatch -------------------------------------------------------

    def evaluate(self, family, image, sp=None):
        """Raw score and exact image-space gradient of one head."""
        if family not in self.enabled:
            raise RewardError(f"family {family!r} is not enabled")
        if family in SP_FAMILIES:
            if sp is None:
                raise RewardError(f"family {family!r} requires a semantic primitive")
            return getattr(self, f"reward_{family}")(image, sp)
        return getattr(self, f"reward_{family}")(image)
