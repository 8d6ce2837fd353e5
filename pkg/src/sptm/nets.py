"""From-scratch fully-connected networks (float64 numpy), the Adam optimizer,
and a finite-difference gradient checker.

Two models live here. The similarity model is siamese: one shared encoder
maps an observation to a small embedding, and a fully-connected head turns a
pair of embeddings into the probability that the two observations were taken
close together in time. Factoring the model this way lets the memory graph
precompute vertex embeddings once and run only the cheap head afterwards.
The locomotion policy maps (current observation, goal observation) directly
to a distribution over the 7 actions.
"""

from __future__ import annotations

import numpy as np

from .sim import N_ACTIONS


def obs_to_vec(obs: np.ndarray) -> np.ndarray:
    """Flatten a uint8 observation stack [2,H,W,3] to float64 in [0,1]."""
    return np.asarray(obs, dtype=np.float64).reshape(-1) / 255.0


def obs_batch_to_mat(obs_batch: np.ndarray) -> np.ndarray:
    """[B,2,H,W,3] uint8 -> [B,D] float64 in [0,1]."""
    b = np.asarray(obs_batch)
    return b.reshape(b.shape[0], -1).astype(np.float64) / 255.0


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> float:
    z = logits - logits.max(axis=-1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
    return float(-logp[np.arange(len(labels)), labels].mean())


def _he_uniform(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape)


class Mlp:
    """Plain ReLU MLP with explicit forward caches and hand-written backprop.

    Parameters are owned arrays in `self.params`, keyed `<prefix>W<i>` /
    `<prefix>b<i>` so several MLPs can share one flat parameter dict.
    Forward caches (input, pre-activation) per layer for backward.
    """

    def __init__(self, sizes: list[int], rng: np.random.Generator, prefix: str = "",
                 zero_last: bool = False):
        self.sizes = list(sizes)
        self.prefix = prefix
        self.params: dict[str, np.ndarray] = {}
        for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            if zero_last and i == len(sizes) - 2:
                # zero logits at init: fresh classifiers start exactly uniform
                self.params[f"{prefix}W{i}"] = np.zeros((n_in, n_out))
            else:
                self.params[f"{prefix}W{i}"] = _he_uniform(rng, n_in, (n_in, n_out))
            self.params[f"{prefix}b{i}"] = np.zeros(n_out)

    @property
    def n_layers(self) -> int:
        return len(self.sizes) - 1

    def forward(self, x, cache=None):
        h = x
        for i in range(self.n_layers):
            pre = h @ self.params[f"{self.prefix}W{i}"] + self.params[f"{self.prefix}b{i}"]
            if cache is not None:
                cache.append((h, pre))
            h = np.maximum(pre, 0.0) if i < self.n_layers - 1 else pre
        return h

    def backward(self, dout, cache, grads):
        d = dout
        for i in range(self.n_layers - 1, -1, -1):
            x, pre = cache[i]
            if i < self.n_layers - 1:
                d = d * (pre > 0.0)
            wkey, bkey = f"{self.prefix}W{i}", f"{self.prefix}b{i}"
            gw = x.T @ d
            gb = d.sum(axis=0)
            if wkey in grads:
                grads[wkey] += gw
                grads[bkey] += gb
            else:
                grads[wkey] = gw
                grads[bkey] = gb
            d = d @ self.params[wkey].T
        return d


class PatchRow:
    """Block-local first layer: the image grid is cut into non-overlapping
    patches and each patch gets its own (unshared) linear map. A locality
    prior without convolution: equivalent to one big FC layer whose weight
    matrix is constrained block-diagonal.

    Input [B, n_frames*H*W*3]; output [B, n_patches*units], ReLU applied.
    """

    def __init__(self, n_frames: int, height: int, width: int, patch: int,
                 units: int, rng: np.random.Generator, prefix: str):
        if height % patch or width % patch:
            raise ValueError(f"frame {width}x{height} not divisible by patch {patch}")
        self.n_frames = n_frames
        self.height = height
        self.width = width
        self.patch = patch
        self.units = units
        self.n_patches = n_frames * (height // patch) * (width // patch)
        self.in_dim = patch * patch * 3
        self.prefix = prefix
        self.params: dict[str, np.ndarray] = {
            f"{prefix}PW": _he_uniform(rng, self.in_dim, (self.n_patches, self.in_dim, units)),
            f"{prefix}Pb": np.zeros((self.n_patches, units)),
        }
        self.out_dim = self.n_patches * units

    def _split(self, x: np.ndarray) -> np.ndarray:
        b = x.shape[0]
        p = self.patch
        g = x.reshape(b, self.n_frames, self.height // p, p, self.width // p, p, 3)
        return g.transpose(0, 1, 2, 4, 3, 5, 6).reshape(b, self.n_patches, self.in_dim)

    def forward(self, x: np.ndarray, cache: list | None = None) -> np.ndarray:
        xp = self._split(x)
        pre = np.matmul(xp.transpose(1, 0, 2), self.params[f"{self.prefix}PW"])  # [P,B,U]
        pre += self.params[f"{self.prefix}Pb"][:, None, :]
        if cache is not None:
            cache.append((xp, pre))
        h = np.maximum(pre, 0.0)
        return h.transpose(1, 0, 2).reshape(x.shape[0], self.out_dim)

    def backward(self, dout: np.ndarray, cache: list, grads: dict) -> None:
        xp, pre = cache.pop()
        b = dout.shape[0]
        d = dout.reshape(b, self.n_patches, self.units).transpose(1, 0, 2)  # [P,B,U]
        d = d * (pre > 0.0)
        wkey, bkey = f"{self.prefix}PW", f"{self.prefix}Pb"
        gw = np.matmul(xp.transpose(1, 2, 0), d)        # [P,I,B]@[P,B,U]
        gb = d.sum(axis=1)
        if wkey in grads:
            grads[wkey] += gw
            grads[bkey] += gb
        else:
            grads[wkey] = gw
            grads[bkey] = gb


class SimilarityModel:
    """Siamese temporal-proximity classifier.

    `embed` runs the shared encoder branch (a patch row feeding a small MLP);
    `head_similarity` runs the pair head on precomputed embeddings;
    `similarity` composes the two. The head sees the two embeddings plus
    their absolute difference and product, and outputs the softmax
    probability of the "temporally close" class.
    """

    kind = "similarity"

    def __init__(self, frame_width: int = 32, frame_height: int = 24,
                 embed_dim: int = 32, enc_hidden: int = 256,
                 head_hidden: int = 128, head_layers: int = 4, seed: int = 0,
                 encoder: str = "patch", patch: int = 8, patch_units: int = 32):
        self.frame_width = frame_width
        self.frame_height = frame_height
        self.embed_dim = embed_dim
        self.enc_hidden = enc_hidden
        self.head_hidden = head_hidden
        self.head_layers = head_layers
        self.encoder = encoder
        self.patch = patch
        self.patch_units = patch_units
        self.obs_dim = 2 * frame_height * frame_width * 3
        rng = np.random.default_rng(seed)
        if encoder == "patch":
            self.patch_row = PatchRow(2, frame_height, frame_width, patch, patch_units,
                                      rng, prefix="enc.")
            enc_in = self.patch_row.out_dim
        elif encoder == "flat":
            self.patch_row = None
            enc_in = self.obs_dim
        else:
            raise ValueError(f"unknown encoder kind {encoder!r}")
        self.enc = Mlp([enc_in, enc_hidden, embed_dim], rng, prefix="enc.")
        self.head = Mlp([4 * embed_dim] + [head_hidden] * head_layers + [2], rng, prefix="head.",
                        zero_last=True)
        self.params: dict[str, np.ndarray] = {}
        if self.patch_row is not None:
            self.params.update(self.patch_row.params)
        self.params.update(self.enc.params)
        self.params.update(self.head.params)
        if self.patch_row is not None:
            self.patch_row.params = self.params
        self.enc.params = self.params
        self.head.params = self.params

    def describe(self) -> dict:
        return {
            "kind": self.kind,
            "frame_width": self.frame_width,
            "frame_height": self.frame_height,
            "embed_dim": self.embed_dim,
            "enc_hidden": self.enc_hidden,
            "head_hidden": self.head_hidden,
            "head_layers": self.head_layers,
            "encoder": self.encoder,
            "patch": self.patch,
            "patch_units": self.patch_units,
        }

    def _check_dim(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        if x.shape[1] != self.obs_dim:
            raise ValueError(f"observation dim {x.shape[1]} != model dim {self.obs_dim}")
        return x

    def _encode(self, x: np.ndarray, pcache=None, mcache=None) -> np.ndarray:
        h = x - 0.5  # pixels arrive in [0,1]; center them
        if self.patch_row is not None:
            h = self.patch_row.forward(h, pcache)
        return self.enc.forward(h, mcache)

    def embed(self, x: np.ndarray) -> np.ndarray:
        """Observation vectors [B,D] (or [D]) -> embeddings [B,E]."""
        return self._encode(self._check_dim(x))

    @staticmethod
    def _pair_features(e1: np.ndarray, e2: np.ndarray) -> np.ndarray:
        e1, e2 = np.atleast_2d(e1), np.atleast_2d(e2)
        return np.concatenate([e1, e2, np.abs(e1 - e2), e1 * e2], axis=1)

    def head_logits(self, e1: np.ndarray, e2: np.ndarray) -> np.ndarray:
        return self.head.forward(self._pair_features(e1, e2))

    def head_similarity(self, e1: np.ndarray, e2: np.ndarray) -> np.ndarray:
        """P(temporally close) from precomputed embeddings; shape [B]."""
        return softmax(self.head_logits(e1, e2))[:, 1]

    def similarity(self, x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
        """P(temporally close) for observation vectors; exactly embed+head."""
        return self.head_similarity(self.embed(x1), self.embed(x2))

    def loss_and_grads(self, batch) -> tuple[float, dict[str, np.ndarray]]:
        """Mean cross-entropy over (x1 [B,D], x2 [B,D], y [B]) and its grads."""
        x1, x2, y = batch
        x1 = self._check_dim(x1)
        x2 = self._check_dim(x2)
        p1: list = []
        p2: list = []
        c1: list = []
        c2: list = []
        ch: list = []
        e1 = self._encode(x1, p1, c1)
        e2 = self._encode(x2, p2, c2)
        logits = self.head.forward(self._pair_features(e1, e2), ch)
        p = softmax(logits)
        n = len(y)
        loss = cross_entropy(logits, y)
        dlogits = p.copy()
        dlogits[np.arange(n), y] -= 1.0
        dlogits /= n
        grads: dict[str, np.ndarray] = {}
        dpair = self.head.backward(dlogits, ch, grads)
        E = self.embed_dim
        sgn = np.sign(e1 - e2)
        de1 = dpair[:, :E] + dpair[:, 2 * E:3 * E] * sgn + dpair[:, 3 * E:] * e2
        de2 = dpair[:, E:2 * E] - dpair[:, 2 * E:3 * E] * sgn + dpair[:, 3 * E:] * e1
        dh1 = self.enc.backward(de1, c1, grads)   # shared branch: grads accumulate
        dh2 = self.enc.backward(de2, c2, grads)
        if self.patch_row is not None:
            self.patch_row.backward(dh1, p1, grads)
            self.patch_row.backward(dh2, p2, grads)
        return loss, grads


class LocomotionPolicy:
    """Maps (current observation, goal observation) to action probabilities."""

    kind = "locomotion"

    def __init__(self, frame_width: int = 32, frame_height: int = 24,
                 hidden: tuple[int, ...] = (256, 128), seed: int = 0,
                 encoder: str = "patch", patch: int = 8, patch_units: int = 32):
        self.frame_width = frame_width
        self.frame_height = frame_height
        self.hidden = tuple(hidden)
        self.encoder = encoder
        self.patch = patch
        self.patch_units = patch_units
        self.obs_dim = 2 * frame_height * frame_width * 3
        rng = np.random.default_rng(seed)
        if encoder == "patch":
            # 4 frames total: current observation (2) + goal observation (2)
            self.patch_row = PatchRow(4, frame_height, frame_width, patch, patch_units,
                                      rng, prefix="pol.")
            net_in = self.patch_row.out_dim
        elif encoder == "flat":
            self.patch_row = None
            net_in = 2 * self.obs_dim
        else:
            raise ValueError(f"unknown encoder kind {encoder!r}")
        self.net = Mlp([net_in, *self.hidden, N_ACTIONS], rng, prefix="pol.",
                       zero_last=True)
        self.params: dict[str, np.ndarray] = {}
        if self.patch_row is not None:
            self.params.update(self.patch_row.params)
        self.params.update(self.net.params)
        if self.patch_row is not None:
            self.patch_row.params = self.params
        self.net.params = self.params

    def describe(self) -> dict:
        return {
            "kind": self.kind,
            "frame_width": self.frame_width,
            "frame_height": self.frame_height,
            "hidden": list(self.hidden),
            "encoder": self.encoder,
            "patch": self.patch,
            "patch_units": self.patch_units,
        }

    def _pair(self, x: np.ndarray, g: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        g = np.atleast_2d(g)
        if x.shape[1] != self.obs_dim or g.shape[1] != self.obs_dim:
            raise ValueError(f"observation dim mismatch (model dim {self.obs_dim})")
        return np.concatenate([x, g], axis=1)

    def _forward(self, pair: np.ndarray, pcache=None, mcache=None) -> np.ndarray:
        h = pair - 0.5
        if self.patch_row is not None:
            h = self.patch_row.forward(h, pcache)
        return self.net.forward(h, mcache)

    def action_probs(self, x: np.ndarray, goal: np.ndarray) -> np.ndarray:
        """[B,7] (or [7] for single inputs): non-negative, sums to 1."""
        single = np.asarray(x).ndim == 1
        p = softmax(self._forward(self._pair(x, goal)))
        return p[0] if single else p

    def loss_and_grads(self, batch) -> tuple[float, dict[str, np.ndarray]]:
        """Mean cross-entropy over (x [B,D], goal [B,D], action [B])."""
        x, g, a = batch
        pcache: list = []
        cache: list = []
        logits = self._forward(self._pair(x, g), pcache, cache)
        p = softmax(logits)
        n = len(a)
        loss = cross_entropy(logits, a)
        dlogits = p.copy()
        dlogits[np.arange(n), a] -= 1.0
        dlogits /= n
        grads: dict[str, np.ndarray] = {}
        dh = self.net.backward(dlogits, cache, grads)
        if self.patch_row is not None:
            self.patch_row.backward(dh, pcache, grads)
        return loss, grads


# ---------------------------------------------------------------------------
# Adam

class AdamState:
    """First/second moment accumulators plus the shared step counter."""

    def __init__(self, params: dict[str, np.ndarray]):
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
              state: AdamState, lr: float = 1e-4, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> tuple[dict, AdamState]:
    """One bias-corrected Adam update, in place. Returns (params, state)."""
    state.t += 1
    t = state.t
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    for k, g in grads.items():
        p = params[k]
        if p.shape != g.shape:
            raise ValueError(f"shape mismatch for {k}: param {p.shape} vs grad {g.shape}")
        m = state.m[k]
        v = state.v[k]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
    return params, state


# ---------------------------------------------------------------------------
# Gradient checking

def perturb_params(model, scale: float = 0.05, seed: int = 0) -> None:
    """Nudge every parameter by uniform noise, in place. Gradient checks call
    this first: fresh classifiers have zeroed final layers, and at that exact
    point no gradient flows to the layers beneath, so a check there would not
    exercise them."""
    rng = np.random.default_rng(seed)
    for k in sorted(model.params):
        p = model.params[k]
        p += rng.uniform(-scale, scale, size=p.shape)


def grad_check(model, batch, tolerance: float = 1e-4, h: float = 1e-5,
               entries_per_group: int | None = None, seed: int = 0) -> dict:
    """Compare analytic gradients with central finite differences.

    `model` needs `.params` (dict of arrays) and `.loss_and_grads(batch)`.
    Checks every entry of every parameter group, or a seeded subset of
    `entries_per_group` entries for large groups. Returns a report with the
    max relative error per group and overall, and a pass flag vs `tolerance`.
    """
    _, analytic = model.loss_and_grads(batch)
    rng = np.random.default_rng(seed)
    report = {"groups": {}, "max_rel_err": 0.0}
    for name in sorted(model.params):
        p = model.params[name]
        g = analytic[name]
        flat_p = p.reshape(-1)
        flat_g = g.reshape(-1)
        n = flat_p.size
        if entries_per_group is not None and n > entries_per_group:
            idx = rng.choice(n, size=entries_per_group, replace=False)
        else:
            idx = np.arange(n)
        worst = 0.0
        for i in idx:
            orig = flat_p[i]
            flat_p[i] = orig + h
            lp, _ = model.loss_and_grads(batch)
            flat_p[i] = orig - h
            lm, _ = model.loss_and_grads(batch)
            flat_p[i] = orig
            fd = (lp - lm) / (2.0 * h)
            denom = max(abs(fd), abs(flat_g[i]), 1e-8)
            worst = max(worst, abs(fd - flat_g[i]) / denom)
        report["groups"][name] = float(worst)
        report["max_rel_err"] = float(max(report["max_rel_err"], worst))
    report["passed"] = bool(report["max_rel_err"] < tolerance)
    report["tolerance"] = tolerance
    return report
