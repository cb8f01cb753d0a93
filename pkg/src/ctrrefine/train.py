"""Training protocol: Adam, plateau LR decay, early stopping, repeats, paired t-test."""
from __future__ import annotations

import copy
import logging
import math
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
import torch
from scipy import stats

from .backbones import auc, logloss
from .composer import CTRModel, ModelSpec, compose, model_name, total_param_count
from .data import DatasetBundle

log = logging.getLogger(__name__)

LR_GRID = (0.1, 0.01, 0.001)
BATCH_GRID = (2000, 5000, 10000)


class DivergenceError(RuntimeError):
    def __init__(self, epoch: int, lr: float, loss: float):
        super().__init__(f"non-finite training loss {loss} at epoch {epoch} (lr={lr:g})")
        self.epoch, self.lr, self.loss = epoch, lr, loss


@dataclass
class TrainConfig:
    lr: float = 0.01
    batch_size: int = 2000
    decay_factor: float = 10.0
    plateau_patience: int = 4
    early_stop_patience: int = 3
    max_epochs: int = 100
    seed: int = 2022
    #: an epoch "improves" only if validation AUC rises by more than this
    min_delta: float = 1e-6
    weight_decay: float = 0.0
    deterministic: bool = True
    eval_batch_size: int = 10000

    def __post_init__(self):
        if self.plateau_patience < 1 or self.early_stop_patience < 1:
            raise ValueError("patience values must be positive")
        if self.decay_factor <= 1:
            raise ValueError("decay factor must exceed 1")
        if self.lr <= 0 or self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("lr, batch_size and max_epochs must be positive")


@dataclass
class EpochDecision:
    epoch: int
    metric: float
    improved: bool
    lr: float  # learning rate to use from the next epoch on
    decayed: bool
    stop: bool


class PlateauSchedule:
    """Tracks the monitored metric; plateau decay and early stop keep separate counters.

    Both counters reset on improvement. The plateau counter also resets after
    each decay, so decays fire every ``plateau_patience`` stale epochs.
    """

    def __init__(self, lr: float, decay_factor: float = 10.0, plateau_patience: int = 4,
                 early_stop_patience: int = 3, min_delta: float = 1e-6):
        self.lr = lr
        self.decay_factor = decay_factor
        self.plateau_patience = plateau_patience
        self.early_stop_patience = early_stop_patience
        self.min_delta = min_delta
        self.best = -math.inf
        self.best_epoch = 0
        self.epoch = 0
        self._plateau = 0
        self._stale = 0

    def step(self, metric: float) -> EpochDecision:
        self.epoch += 1
        improved = not math.isnan(metric) and metric > self.best + self.min_delta
        decayed = False
        if improved:
            self.best, self.best_epoch = metric, self.epoch
            self._plateau = self._stale = 0
        else:
            self._plateau += 1
            self._stale += 1
            if self._plateau >= self.plateau_patience:
                self.lr /= self.decay_factor
                self._plateau = 0
                decayed = True
        return EpochDecision(self.epoch, metric, improved, self.lr, decayed,
                             self._stale >= self.early_stop_patience)

    @classmethod
    def from_config(cls, cfg: TrainConfig) -> "PlateauSchedule":
        return cls(cfg.lr, cfg.decay_factor, cfg.plateau_patience, cfg.early_stop_patience,
                   cfg.min_delta)


def simulate_schedule(trace: Sequence[float], cfg: TrainConfig) -> list[EpochDecision]:
    """Replay a validation-metric trace; stops at the first stop decision."""
    sched = PlateauSchedule.from_config(cfg)
    out = []
    for m in trace:
        out.append(sched.step(m))
        if out[-1].stop:
            break
    return out


@dataclass
class RunResult:
    model_name: str
    seed: int
    lr: float
    batch_size: int
    best_epoch: int
    best_valid_auc: float
    test_auc: float
    test_logloss: float
    epochs_run: int
    seconds: float
    params: int
    trace: list = field(default_factory=list)

    @property
    def seconds_per_epoch(self) -> float:
        return self.seconds / max(self.epochs_run, 1)

    def metrics(self) -> tuple:
        return (self.best_epoch, self.best_valid_auc, self.test_auc, self.test_logloss,
                self.epochs_run, tuple((t["train_loss"], t["valid_auc"]) for t in self.trace))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["seconds_per_epoch"] = self.seconds_per_epoch
        return d


def evaluate(model: CTRModel, x: np.ndarray, y: np.ndarray, batch_size: int = 10000) -> tuple[float, float]:
    """``(AUC, logloss)`` of ``model`` on one split."""
    p = model.predict_proba(torch.as_tensor(x), batch_size).double().numpy()
    return auc(y, p), logloss(y, p)


def _seed_everything(seed: int, deterministic: bool):
    torch.manual_seed(seed)
    np.random.seed(seed % 2**32)
    if deterministic:
        torch.use_deterministic_algorithms(True)


def train(model: CTRModel, data: DatasetBundle, cfg: TrainConfig,
          on_epoch: Callable[[dict], None] | None = None) -> RunResult:
    """Fit on ``data.train``, select on validation AUC, report test metrics of the best epoch."""
    _seed_everything(cfg.seed, cfg.deterministic)
    start = time.perf_counter()
    gen = torch.Generator().manual_seed(cfg.seed)
    x = torch.as_tensor(data.train_x)
    y = torch.as_tensor(data.train_y, dtype=torch.get_default_dtype())
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr, weight_decay=cfg.weight_decay)
    loss_fn = torch.nn.BCEWithLogitsLoss()
    sched = PlateauSchedule.from_config(cfg)
    best_state = copy.deepcopy(model.state_dict())
    trace = []
    for epoch in range(1, cfg.max_epochs + 1):
        model.train()
        lr = opt.param_groups[0]["lr"]
        perm = torch.randperm(len(y), generator=gen)
        total, count = 0.0, 0
        for i in range(0, len(perm), cfg.batch_size):
            idx = perm[i:i + cfg.batch_size]
            loss = loss_fn(model(x[idx]), y[idx])
            if not torch.isfinite(loss):
                raise DivergenceError(epoch, lr, float(loss.detach()))
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += float(loss.detach()) * len(idx)
            count += len(idx)
        valid_auc, valid_loss = evaluate(model, data.valid_x, data.valid_y, cfg.eval_batch_size)
        decision = sched.step(valid_auc)
        if decision.improved:
            best_state = copy.deepcopy(model.state_dict())
        for g in opt.param_groups:
            g["lr"] = decision.lr
        row = {"epoch": epoch, "lr": lr, "train_loss": total / max(count, 1),
               "valid_auc": valid_auc, "valid_logloss": valid_loss,
               "improved": decision.improved, "decayed": decision.decayed}
        trace.append(row)
        log.info("epoch %d lr=%g train_loss=%.5f valid_auc=%.5f", epoch, lr,
                 row["train_loss"], valid_auc)
        if on_epoch:
            on_epoch(row)
        if decision.stop:
            break
    model.load_state_dict(best_state)
    test_auc, test_loss = evaluate(model, data.test_x, data.test_y, cfg.eval_batch_size)
    return RunResult(model.name, cfg.seed, cfg.lr, cfg.batch_size, sched.best_epoch,
                     sched.best, test_auc, test_loss, len(trace), time.perf_counter() - start,
                     total_param_count(model), trace)


def run_seeds(base_seed: int, n: int) -> list[int]:
    return [base_seed + i for i in range(n)]


def repeat_runs(spec: ModelSpec, data: DatasetBundle, cfg: TrainConfig, n: int = 10,
                for_ttest: bool = True) -> list[RunResult]:
    """``n`` independent runs; run ``i`` uses seed ``cfg.seed + i`` for init and shuffling."""
    if n < 1 or (for_ttest and n < 2):
        raise ValueError(f"need at least {2 if for_ttest else 1} runs, got {n}")
    results = []
    for seed in run_seeds(cfg.seed, n):
        run_cfg = replace(cfg, seed=seed)
        model = compose(spec, data.schema, seed=seed)
        results.append(train(model, data, run_cfg))
    return results


def grid_search(spec: ModelSpec, data: DatasetBundle, cfg: TrainConfig,
                lrs: Sequence[float] = LR_GRID, batch_sizes: Sequence[int] = BATCH_GRID):
    """Pick ``(lr, batch_size)`` by best validation AUC of one seeded run each."""
    scored = []
    for lr in lrs:
        for bs in batch_sizes:
            run_cfg = replace(cfg, lr=lr, batch_size=bs)
            try:
                res = train(compose(spec, data.schema, seed=cfg.seed), data, run_cfg)
            except DivergenceError as exc:
                log.warning("%s: %s", model_name(spec), exc)
                continue
            scored.append(((lr, bs), res))
    if not scored:
        raise RuntimeError("every grid point diverged")
    best = max(scored, key=lambda s: s[1].best_valid_auc)
    return best[0], scored


def aggregate(values: Sequence[float]) -> tuple[float, float]:
    """Mean and sample standard deviation (0 for a single value)."""
    v = np.asarray(values, dtype=np.float64)
    return float(v.mean()), float(v.std(ddof=1)) if len(v) > 1 else 0.0


@dataclass
class SignificanceReport:
    mean_base: float
    std_base: float
    mean_aug: float
    std_aug: float
    mean_diff: float
    n: int
    t: float | None
    p: float | None
    significant: bool
    alpha: float = 0.01
    note: str = ""

    @property
    def degenerate(self) -> bool:
        return self.p is None


def paired_ttest(base: Sequence[float], aug: Sequence[float], alpha: float = 0.01) -> SignificanceReport:
    """Two-sided paired t-test on per-run metrics, runs paired by index."""
    a = np.asarray(base, dtype=np.float64)
    b = np.asarray(aug, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("paired samples must be 1-D and of equal length")
    if len(a) < 2:
        raise ValueError("paired t-test needs at least two runs")
    d = b - a
    mb, sb = aggregate(a)
    ma, sa = aggregate(b)
    if np.allclose(d, d[0], rtol=0.0, atol=1e-15):
        return SignificanceReport(mb, sb, ma, sa, float(d.mean()), len(a), None, None, False,
                                  alpha, "degenerate: constant shift")
    res = stats.ttest_rel(b, a)
    p = float(res.pvalue)
    return SignificanceReport(mb, sb, ma, sa, float(d.mean()), len(a), float(res.statistic), p,
                              p < alpha, alpha)
