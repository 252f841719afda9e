"""Brute-force checks of the mechanism's provable properties.

The clipping, EMA, lag-weight and query formulas are re-derived here on
purpose instead of imported from ``sampling``/``kernel``/``mechanism``, so
agreement between the two is evidence rather than a tautology. Only the
vector helpers and the random streams from ``core`` are shared.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .core import MechanismConfig, MemoryVariant, PrivacyConfig, Rng, Vector, gaussian_vector, vec_norm2
from .mechanism import Transcript, run_mechanism
from .model import Mlp
from .sampling import DatasetHandle

MAX_BRUTE_FORCE_EXAMPLES = 12
SENSITIVITY_SLACK = 1e-10


class OracleError(ValueError):
    pass


# ---- independent formula re-derivations -------------------------------------

def _clip(g: np.ndarray, clip_c: float) -> np.ndarray:
    n = float(np.linalg.norm(g))
    return g if n <= clip_c else g * (clip_c / n)


def _ema(history: list[Vector], gamma: float) -> Vector | None:
    """Trend over releases ``history[0] .. history[-1]`` (oldest first)."""
    if not history:
        return None
    ema = np.array(history[0], dtype=np.float64)
    for rel in history[1:]:
        ema = gamma * rel + (1.0 - gamma) * ema
    return ema


def oracle_weights(history: list[Vector], cfg: MechanismConfig) -> np.ndarray | None:
    """Lag weights at step ``t = len(history)`` from the full release history.

    Direct exponentiation, no log-domain shift. ``None`` when ``K_t = 1``.
    """
    t = len(history)
    k_t = min(cfg.memory_window, t + 1)
    if k_t < 2 or cfg.memory_variant is MemoryVariant.CURRENT_ONLY:
        return None
    lagged = [history[t - j] for j in range(1, k_t)]
    if cfg.memory_variant is MemoryVariant.UNIFORM:
        raw = [1.0] * len(lagged)
    elif cfg.memory_variant is MemoryVariant.EXPONENTIAL:
        raw = [cfg.exp_decay ** (j - 1) for j in range(1, k_t)]
    else:
        ema = _ema(history, cfg.gamma)
        ema_norm = float(np.linalg.norm(ema))
        chi = ema_norm / (ema_norm + cfg.zeta)
        raw = []
        for j, rel in enumerate(lagged, start=1):
            nu = float(np.linalg.norm(rel - ema)) / (max(ema_norm, cfg.kappa) + cfg.eps_stab)
            raw.append((j + 1) ** (cfg.alpha - 1) * math.exp(-(cfg.temper_lambda + chi * cfg.tau * nu) * j))
    raw_arr = np.array(raw)
    return raw_arr / raw_arr.sum()


def _memory(history: list[Vector], cfg: MechanismConfig, dim: int) -> Vector:
    w = oracle_weights(history, cfg)
    u = np.zeros(dim)
    if w is None:
        return u
    t = len(history)
    for j, wj in enumerate(w, start=1):
        u = u + wj * history[t - j]
    return u


def _query(clipped_rows: list[np.ndarray], dim: int, memory: Vector, cfg: MechanismConfig) -> Vector:
    s = np.zeros(dim)
    for row in clipped_rows:
        s = s + row
    if cfg.memory_variant is MemoryVariant.CURRENT_ONLY:
        return s
    return cfg.beta * s + (1.0 - cfg.beta) * memory


# ---- sensitivity -------------------------------------------------------------

@dataclass
class SensitivityReport:
    max_observed: float
    bound: float
    witnesses: list[tuple[str, float]] = field(default_factory=list)

    @property
    def violated(self) -> bool:
        return self.max_observed > self.bound + SENSITIVITY_SLACK


def default_probes(grads: np.ndarray, mask: np.ndarray, clip_c: float, n_axes: int = 8) -> np.ndarray:
    """Worst-case candidate gradients for an added example.

    Norm-``C`` vectors along ``+-e_i`` for the first ``n_axes`` axes and along
    ``+-`` the current clipped-sum direction, plus an over-norm copy of the
    latter that clipping must cut back to ``C``.
    """
    d = grads.shape[1]
    probes = []
    for i in range(min(n_axes, d)):
        e = np.zeros(d)
        e[i] = clip_c
        probes += [e, -e]
    s = np.zeros(d)
    for g, m in zip(grads, mask):
        if m:
            s = s + _clip(g, clip_c)
    n = float(np.linalg.norm(s))
    direction = s / n if n > 0 else np.eye(1, d, 0)[0]
    probes += [clip_c * direction, -clip_c * direction, 3.0 * clip_c * direction]
    return np.array(probes)


def brute_force_sensitivity(
    grads: np.ndarray,
    mask: np.ndarray,
    transcript_prefix: list[Vector],
    mech: MechanismConfig,
    priv: PrivacyConfig,
    probes: np.ndarray | None = None,
) -> SensitivityReport:
    """Max change of the query over every add-one / remove-one neighbour.

    ``grads`` are the per-example gradients of the small dataset at the
    parameter implied by ``transcript_prefix``; ``mask`` is the fixed sampling
    mask. Removal takes each member out in turn; addition inserts each probe
    gradient with inclusion bit 1 (bit 0 leaves the query unchanged).
    """
    grads = np.asarray(grads, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    n, d = grads.shape
    if n > MAX_BRUTE_FORCE_EXAMPLES:
        raise OracleError(f"brute force is limited to {MAX_BRUTE_FORCE_EXAMPLES} examples, got {n}")
    if mask.shape != (n,):
        raise OracleError("mask length must equal the number of examples")
    if probes is None:
        probes = default_probes(grads, mask, priv.clip_c)

    memory = _memory(list(transcript_prefix), mech, d)
    clipped = [_clip(g, priv.clip_c) for g in grads]

    def query(rows: list[np.ndarray]) -> Vector:
        return _query(rows, d, memory, mech)

    base = query([c for c, m in zip(clipped, mask) if m])
    report = SensitivityReport(0.0, _effective_beta(mech) * priv.clip_c)
    for i in range(n):
        rows = [c for k, (c, m) in enumerate(zip(clipped, mask)) if m and k != i]
        diff = vec_norm2(base - query(rows))
        report.witnesses.append((f"remove {i} (bit {int(mask[i])})", diff))
    for p_idx, probe in enumerate(probes):
        rows = [c for c, m in zip(clipped, mask) if m] + [_clip(probe, priv.clip_c)]
        diff = vec_norm2(base - query(rows))
        report.witnesses.append((f"add probe {p_idx}", diff))
    report.max_observed = max((w[1] for w in report.witnesses), default=0.0)
    return report


def _effective_beta(mech: MechanismConfig) -> float:
    return 1.0 if mech.memory_variant is MemoryVariant.CURRENT_ONLY else mech.beta


# ---- decomposition -------------------------------------------------------------

def check_decomposition(transcript: Transcript) -> float:
    """Max relative error of ``r_t = beta s_t + M_rec + M_noise`` over the run.

    Needs a transcript recorded with ``retain_debug=True``. Also checks that
    the recorded lag weights match the independently recomputed ones.
    """
    recs = transcript.records
    if any(r.query is None or r.noise is None or r.clipped_sum is None for r in recs):
        raise OracleError("transcript does not retain queries and noise draws")
    cfg = transcript.mechanism
    beta = _effective_beta(cfg)
    history: list[Vector] = []
    worst = 0.0
    for t, rec in enumerate(recs):
        d = rec.query.shape[0]
        m_rec, m_noise = np.zeros(d), np.zeros(d)
        w = oracle_weights(history, cfg)
        if w is not None:
            if rec.weights is None or np.max(np.abs(rec.weights - w)) > 1e-12:
                raise OracleError(f"step {t}: recorded lag weights disagree with recomputation")
            for j, wj in enumerate(w, start=1):
                m_rec = m_rec + (1.0 - beta) * wj * recs[t - j].query
                m_noise = m_noise + (1.0 - beta) * wj * recs[t - j].noise
        rhs = beta * rec.clipped_sum + m_rec + m_noise
        scale = max(vec_norm2(rec.query), np.finfo(float).tiny)
        worst = max(worst, vec_norm2(rec.query - rhs) / scale)
        history.append(rec.release)
    return worst


# ---- limiting regimes ------------------------------------------------------------

@dataclass
class SmallProblem:
    model: Mlp
    theta0: Vector
    features: np.ndarray
    labels: np.ndarray

    def grad_fn(self, theta: Vector, idx: np.ndarray) -> np.ndarray:
        return self.model.batch_grads(theta, self.features[idx], self.labels[idx])


def small_problem(seed: int, n: int = 64, in_dim: int = 6, num_classes: int = 3) -> SmallProblem:
    rng = Rng(seed)
    stream = rng.stream("data")
    labels = stream.integers(0, num_classes, size=n)
    features = stream.standard_normal((n, in_dim)) + labels[:, None]
    model = Mlp(in_dim, num_classes, hidden=(5, 4))
    return SmallProblem(model, model.init_params(rng.stream("init")), features, labels)


def _run(problem: SmallProblem, algorithm: str, mech, priv, eta, steps, seed, retain=False) -> Transcript:
    data = DatasetHandle(problem.labels, priv.q)
    _, tr = run_mechanism(
        algorithm, problem.theta0, data, problem.grad_fn, mech, priv, eta, steps, Rng(seed), retain_debug=retain
    )
    return tr


def _beta_scaled_replay(problem: SmallProblem, beta: float, priv: PrivacyConfig, eta: float, steps: int, seed: int):
    """Independent memoryless loop: ``release = beta * s_t + Z_t``."""
    rng = Rng(seed)
    n = len(problem.labels)
    lot = n * priv.q
    theta = problem.theta0.copy()
    out = []
    for _ in range(steps):
        idx = np.flatnonzero(rng.stream("mask").random(n) < priv.q)
        rows = problem.grad_fn(theta, idx) if idx.size else np.zeros((0, theta.size))
        s = np.zeros(theta.size)
        for g in rows:
            s = s + _clip(g, priv.clip_c)
        rel = beta * s + gaussian_vector(rng.stream("noise"), theta.size, priv.sigma * priv.clip_c)
        theta = theta - eta * rel / lot
        out.append(rel)
    return out


def check_reductions(
    seed: int,
    mech: MechanismConfig | None = None,
    priv: PrivacyConfig | None = None,
    eta: float = 0.8,
    steps: int = 20,
    problem: SmallProblem | None = None,
) -> dict[str, bool]:
    """Pass/fail for each exact limiting regime on a small problem."""
    mech = mech or MechanismConfig(tau=2.0, temper_lambda=0.3)
    priv = priv or PrivacyConfig(q=0.25)
    problem = problem or small_problem(seed)
    results: dict[str, bool] = {}

    # (i) beta = 1 is ordinary DP-SGD, bit for bit
    fo = _run(problem, "fo_dp_sgd", replace(mech, beta=1.0), priv, eta, steps, seed)
    dp = _run(problem, "dp_sgd", mech, priv, eta, steps, seed)
    results["beta_one_equals_dp_sgd"] = all(
        a.release.tobytes() == b.release.tobytes() and a.noisy_grad.tobytes() == b.noisy_grad.tobytes()
        for a, b in zip(fo.records, dp.records)
    ) and len(fo) == len(dp) == steps

    def weight_check(cfg: MechanismConfig, direct, tol: float) -> bool:
        tr = _run(problem, "fo_dp_sgd", cfg, priv, eta, steps, seed)
        history: list[Vector] = []
        ok = True
        for rec in tr.records:
            expected = direct(history, cfg)
            if expected is None:
                ok &= rec.weights is None
            else:
                ok &= rec.weights is not None and float(np.max(np.abs(rec.weights - expected))) <= tol
            history.append(rec.release)
        return bool(ok)

    def tau_zero_form(history, cfg):
        k_t = min(cfg.memory_window, len(history) + 1)
        if k_t < 2:
            return None
        a = np.array([(j + 1) ** (cfg.alpha - 1) * math.exp(-cfg.temper_lambda * j) for j in range(1, k_t)])
        return a / a.sum()

    def alpha_one_form(history, cfg):
        k_t = min(cfg.memory_window, len(history) + 1)
        if k_t < 2:
            return None
        ema = _ema(history, cfg.gamma)
        en = float(np.linalg.norm(ema))
        chi = en / (en + cfg.zeta)
        t = len(history)
        a = []
        for j in range(1, k_t):
            nu = float(np.linalg.norm(history[t - j] - ema)) / (max(en, cfg.kappa) + cfg.eps_stab)
            a.append(math.exp(-(cfg.temper_lambda + chi * cfg.tau * nu) * j))
        a = np.array(a)
        return a / a.sum()

    # (ii) tau = 0 and (iii) alpha = 1 closed forms
    results["tau_zero_form"] = weight_check(replace(mech, tau=0.0), tau_zero_form, 1e-12)
    results["alpha_one_form"] = weight_check(replace(mech, alpha=1.0), alpha_one_form, 1e-12)

    # (iv) K = 1 collapses to the memoryless beta-scaled release
    k1 = _run(problem, "fo_dp_sgd", replace(mech, memory_window=1), priv, eta, steps, seed)
    replay = _beta_scaled_replay(problem, mech.beta, priv, eta, steps, seed)
    results["k_one_beta_scaled"] = all(
        rec.weights is None and np.allclose(rec.release, rel, rtol=1e-12, atol=1e-12)
        for rec, rel in zip(k1.records, replay)
    )

    # (v) alpha = 1, lambda = tau = 0 gives the uniform variant's weights
    flat = replace(mech, alpha=1.0, temper_lambda=0.0, tau=0.0)
    fo_flat = _run(problem, "fo_dp_sgd", flat, priv, eta, steps, seed)
    uni = _run(problem, "uniform_mem", flat, priv, eta, steps, seed)
    results["flat_kernel_equals_uniform"] = all(
        (a.weights is None and b.weights is None)
        or (a.weights is not None and b.weights is not None and np.max(np.abs(a.weights - b.weights)) <= 1e-14)
        for a, b in zip(fo_flat.records, uni.records)
    )
    return results


# ---- randomized sensitivity trials -----------------------------------------------

@dataclass
class TrialSummary:
    beta: float
    trials: int
    max_ratio: float  # max observed / bound over trials
    min_ratio: float  # smallest per-trial max observed / bound (tightness)
    violations: int


def sensitivity_trials(
    betas=(1.0, 0.9, 0.5),
    trials: int = 100,
    n_examples: int = 8,
    dim: int = 5,
    clip_c: float = 1.0,
    seed: int = 0,
) -> list[TrialSummary]:
    """Brute-force sensitivity on random instances for each ``beta``.

    Each instance draws per-example gradients (some above the clip norm), a
    sampling mask and a random release history of 0 to 12 steps.
    """
    stream = Rng(seed).stream("sensitivity")
    priv = PrivacyConfig(clip_c=clip_c)
    out = []
    for beta in betas:
        mech = MechanismConfig(beta=beta)
        ratios = []
        violations = 0
        for _ in range(trials):
            scale = stream.uniform(0.1, 3.0, size=(n_examples, 1))
            grads = stream.standard_normal((n_examples, dim)) * scale
            mask = stream.random(n_examples) < 0.5
            prefix = list(stream.standard_normal((int(stream.integers(0, 13)), dim)) * stream.uniform(0.1, 4.0))
            rep = brute_force_sensitivity(grads, mask, prefix, mech, priv)
            violations += rep.violated
            ratios.append(rep.max_observed / rep.bound)
        out.append(TrialSummary(beta, trials, max(ratios), min(ratios), violations))
    return out
