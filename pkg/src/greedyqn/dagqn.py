"""Master-worker variant with single-round synchronous communication.

Per round, each worker pulls the new iterate, runs tau greedy refinement
updates at the old point plus one corrected update at the new point
(tau + 2 local HVPs), and pushes one message: the greedy indices, their
HVP vectors, the residual r_i+, and the new local gradient.  The master
replays the recorded updates -- no greedy re-selection, no HVPs -- so
its copy of every worker estimate stays bit-identical to the worker's,
then re-aggregates G = sum_i G_i and steps with the sqrt(p)-adjusted
stepsize constants.

The transport is an in-memory byte codec (little-endian, 32-bit ids,
64-bit reals) so the per-round communication claim is checked on actual
encoded bytes: tau(n+1) + n + 2 scalars for the message plus n for the
gradient.
"""

from __future__ import annotations

import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .agqn import (
    DIAGNOSTIC_GATE,
    REASON_MAX_ITERS,
    REASON_TOLERANCE,
    IterationRecord,
    SolverResult,
    StepsizePolicy,
    beta,
    warm_start_G0,
)
from .broyden import (
    DEFAULT_VARIANT,
    BroydenVariant,
    HessianEstimate,
    broyd,
    corrected_update_recorded,
    gbroyd_tau,
    sigma_metric,
)
from .linalg import SpdFactor, weighted_norm
from .objectives import LogisticObjective, preset_constants

__all__ = [
    "ProtocolError",
    "ReplayMismatchError",
    "GreedyRecord",
    "InfoVector",
    "encode_infovec",
    "decode_infovec",
    "encode_gradient",
    "decode_gradient",
    "infovec_scalar_count",
    "infovec_byte_size",
    "push_scalar_count",
    "infvec",
    "gupdate",
    "WorkerState",
    "MasterState",
    "RoundStats",
    "comm_account",
    "partition_shards",
    "DagqnConfig",
    "dagqn_run",
]


class ProtocolError(RuntimeError):
    """A worker message is malformed (size, id range, or residual sign)."""


class ReplayMismatchError(RuntimeError):
    """The master's replayed estimate differs from the worker's copy."""


_UINT = struct.Struct("<I")
_REAL = struct.Struct("<d")


@dataclass(frozen=True, eq=False)
class GreedyRecord:
    """One recorded greedy update: 1-based unit-vector id and its HVP."""

    id: int
    hvp: np.ndarray


@dataclass(frozen=True, eq=False)
class InfoVector:
    """Everything needed to replay one worker's per-round estimate update."""

    records: tuple
    correction: GreedyRecord
    r_plus: float

    @property
    def tau(self):
        return len(self.records)

    def scalar_count(self):
        n = self.correction.hvp.shape[0]
        return infovec_scalar_count(n, self.tau)


def infovec_scalar_count(n, tau):
    """Scalars in one message, counting each id as one: tau(n+1) + n + 2."""
    return tau * (n + 1) + n + 2


def infovec_byte_size(n, tau):
    return (tau + 1) * _UINT.size + ((tau + 1) * n + 1) * _REAL.size


def push_scalar_count(n, tau):
    """Message plus local gradient: tau(n+1) + 2n + 2 scalars per push."""
    return infovec_scalar_count(n, tau) + n


def _pack_vector(vec):
    return np.ascontiguousarray(vec, dtype="<f8").tobytes()


def encode_infovec(message):
    parts = []
    for record in message.records:
        parts.append(_UINT.pack(record.id))
        parts.append(_pack_vector(record.hvp))
    parts.append(_UINT.pack(message.correction.id))
    parts.append(_pack_vector(message.correction.hvp))
    parts.append(_REAL.pack(message.r_plus))
    return b"".join(parts)


def _read_record(data, offset, n, what):
    (ident,) = _UINT.unpack_from(data, offset)
    offset += _UINT.size
    if not 1 <= ident <= n:
        raise ProtocolError("%s: id %d outside 1..%d" % (what, ident, n))
    vec = np.frombuffer(data, dtype="<f8", count=n, offset=offset).copy()
    offset += n * _REAL.size
    return GreedyRecord(int(ident), vec), offset


def decode_infovec(data, n, tau):
    expected = infovec_byte_size(n, tau)
    if len(data) != expected:
        raise ProtocolError(
            "message is %d bytes, expected %d for n=%d, tau=%d"
            % (len(data), expected, n, tau)
        )
    offset = 0
    records = []
    for t in range(tau):
        record, offset = _read_record(data, offset, n, "refinement record %d" % t)
        records.append(record)
    correction, offset = _read_record(data, offset, n, "correction record")
    (r_plus,) = _REAL.unpack_from(data, offset)
    if not r_plus >= 0.0:
        raise ProtocolError("residual %r must be nonnegative" % (r_plus,))
    return InfoVector(tuple(records), correction, float(r_plus))


def encode_gradient(grad):
    return _pack_vector(grad)


def decode_gradient(data, n):
    if len(data) != n * _REAL.size:
        raise ProtocolError(
            "gradient payload is %d bytes, expected %d" % (len(data), n * _REAL.size)
        )
    return np.frombuffer(data, dtype="<f8", count=n).copy()


def infvec(est, x, x_plus, objective, tau, variant=DEFAULT_VARIANT):
    """Worker-side step: refine at x, correct at x_plus, record everything.

    Returns the message and the worker's updated estimate.  Costs exactly
    tau + 2 HVPs against the local objective.
    """
    oracle_here = objective.hessian_oracle(x)
    est, refine_records = gbroyd_tau(est, oracle_here, tau, variant)
    dx = np.asarray(x_plus, dtype=float) - np.asarray(x, dtype=float)
    r_plus = weighted_norm(dx, oracle_here.hvp(dx))
    est, index, a_vec = corrected_update_recorded(
        est, r_plus, objective.constants.concordance,
        objective.hessian_oracle(x_plus), variant,
    )
    message = InfoVector(
        tuple(GreedyRecord(i + 1, vec) for i, vec in refine_records),
        GreedyRecord(index + 1, a_vec),
        r_plus,
    )
    return message, est


def _check_record(record, n, what):
    if not 1 <= record.id <= n:
        raise ProtocolError("%s: id %d outside 1..%d" % (what, record.id, n))
    if record.hvp.shape != (n,):
        raise ProtocolError(
            "%s: vector of shape %r, expected (%d,)" % (what, record.hvp.shape, n)
        )


def gupdate(est, message, m_const, variant=DEFAULT_VARIANT):
    """Replay a recorded update: deterministic, HVP-free.

    Applies the tau recorded refinement updates, the (1 + M r+) scaling,
    and the recorded correction update, in that order -- the exact
    instruction sequence of the live path, so results are bit-identical.
    """
    n = est.n
    for t, record in enumerate(message.records):
        _check_record(record, n, "refinement record %d" % t)
        est = broyd(variant, est, record.id - 1, record.hvp)
    if not message.r_plus >= 0.0:
        raise ProtocolError("residual %r must be nonnegative" % (message.r_plus,))
    est = est.scaled(1.0 + m_const * message.r_plus)
    _check_record(message.correction, n, "correction record")
    return broyd(variant, est, message.correction.id - 1, message.correction.hvp)


@dataclass
class WorkerState:
    index: int
    objective: object
    est: HessianEstimate


@dataclass
class MasterState:
    x: np.ndarray
    copies: list
    aggregate: np.ndarray
    grads: list
    policy: StepsizePolicy
    rounds: int = 0


@dataclass
class RoundStats:
    """Exact communication accounting, measured on encoded bytes."""

    workers: int
    n: int
    tau: int
    rounds: int = 0
    setup_scalars_per_worker: int = 0
    pull_scalars_per_worker_per_round: int = 0
    push_scalars_per_worker_per_round: int | None = None
    total_pushed: int = 0
    total_pulled: int = 0

    def record_setup(self, scalars_per_worker):
        self.setup_scalars_per_worker = scalars_per_worker
        self.total_pushed += scalars_per_worker * self.workers

    def record_round(self, push_scalars):
        expected = push_scalar_count(self.n, self.tau)
        for i, count in enumerate(push_scalars):
            if count != expected:
                raise ProtocolError(
                    "worker %d pushed %d scalars, expected %d" % (i, count, expected)
                )
        if self.push_scalars_per_worker_per_round is None:
            self.push_scalars_per_worker_per_round = expected
        self.rounds += 1
        self.total_pushed += sum(push_scalars)
        self.total_pulled += self.pull_scalars_per_worker_per_round * self.workers


def comm_account(stats, n, tau, p):
    """Validate the exact per-round scalar counts and summarize them."""
    expected_push = push_scalar_count(n, tau)
    if stats.workers != p or stats.n != n or stats.tau != tau:
        raise ValueError("stats were collected for a different run shape")
    if stats.rounds > 0 and stats.push_scalars_per_worker_per_round != expected_push:
        raise ValueError(
            "per-round push of %r scalars, expected %d"
            % (stats.push_scalars_per_worker_per_round, expected_push)
        )
    expected_total = p * (stats.setup_scalars_per_worker + stats.rounds * expected_push)
    if stats.total_pushed != expected_total:
        raise ValueError(
            "total pushed %d scalars, expected %d" % (stats.total_pushed, expected_total)
        )
    return {
        "workers": p,
        "rounds": stats.rounds,
        "push_scalars_per_worker_per_round": expected_push,
        "message_scalars_per_worker_per_round": infovec_scalar_count(n, tau),
        "pull_scalars_per_worker_per_round": stats.pull_scalars_per_worker_per_round,
        "setup_scalars_per_worker": stats.setup_scalars_per_worker,
        "total_pushed": stats.total_pushed,
        "total_pulled": stats.total_pulled,
    }


def partition_shards(dataset, p, gamma=1.0, constants=None):
    """Split a dataset into p contiguous local objectives with sum f_i = f.

    Sample counts differ by at most one (remainder to the lowest-index
    workers) and the regularizer is split as gamma / p.  All workers get
    identical constants; by default the preset scaled by m / p.
    """
    m = dataset.m
    if p < 1:
        raise ValueError("worker count must be at least 1, got %r" % (p,))
    if p > m:
        raise ValueError("cannot split %d samples over %d workers" % (m, p))
    if constants is None:
        constants = preset_constants(m / p)
    base, remainder = divmod(m, p)
    shards = []
    start = 0
    for i in range(p):
        stop = start + base + (1 if i < remainder else 0)
        shards.append(
            LogisticObjective(
                dataset.samples[start:stop],
                dataset.labels[start:stop],
                gamma=gamma / p,
                constants=constants,
            )
        )
        start = stop
    return shards


@dataclass
class DagqnConfig:
    x0: np.ndarray
    tau: int = 6
    eps: float | None = None
    tol: float = 1e-9
    max_iters: int = 500
    variant: BroydenVariant = DEFAULT_VARIANT
    g0: object = "omega"
    diagnostics: bool = False
    theory_stepsize: bool = False
    keep_iterates: bool = False
    check_replay: bool = True
    parallel_workers: bool = False

    def __post_init__(self):
        if self.tol <= 0.0:
            raise ValueError("tol must be positive, got %g" % self.tol)
        if self.max_iters < 0:
            raise ValueError("max_iters must be nonnegative")


def _initial_estimate(shard, config, policy, p):
    if config.g0 == "omega":
        return HessianEstimate(shard.constants.omega * np.eye(shard.n))
    if config.g0 == "warm":
        # Per-worker budget eps/p so the summed metric starts within eps.
        return warm_start_G0(shard, config.x0, policy.eps / p, config.variant)
    raise ValueError("unknown initial-estimate policy %r" % (config.g0,))


def _fold_matrices(copies):
    total = copies[0].matrix.copy()
    for est in copies[1:]:
        total += est.matrix
    return total


def _fold_vectors(parts):
    total = parts[0].copy()
    for vec in parts[1:]:
        total += vec
    return total


def _shards_agree(shards):
    n = shards[0].n
    first = shards[0].constants
    for shard in shards[1:]:
        if shard.n != n:
            raise ValueError("shards disagree on dimension")
        other = shard.constants
        if (first.mu, first.omega, first.lipschitz, first.concordance) != (
            other.mu, other.omega, other.lipschitz, other.concordance,
        ):
            raise ValueError("shards disagree on smoothness constants")
    return n, first


def dagqn_run(shards, config):
    """Run the synchronous master-worker method over p local objectives.

    The master folds worker messages in worker-index order, so the result
    is independent of worker execution parallelism; with check_replay the
    master's replayed copies are byte-compared against the workers' own
    estimates every round.
    """
    p = len(shards)
    if p < 1:
        raise ValueError("need at least one worker")
    n, constants = _shards_agree(shards)
    x = np.array(config.x0, dtype=float)
    if x.shape != (n,):
        raise ValueError("x0 shape %r does not match n = %d" % (x.shape, n))
    policy = StepsizePolicy.build(constants, n, config.tau, config.eps, p=p)
    m_const = constants.concordance
    tau = config.tau
    variant = config.variant
    diagnose = config.diagnostics and n <= DIAGNOSTIC_GATE

    if isinstance(config.g0, str):
        worker_ests = [_initial_estimate(shard, config, policy, p) for shard in shards]
    else:
        worker_ests = list(config.g0)
        if len(worker_ests) != p:
            raise ValueError("need one initial estimate per worker")
    workers = [WorkerState(i, shard, est) for i, (shard, est) in enumerate(zip(shards, worker_ests))]
    copies = [HessianEstimate(w.est.matrix) for w in workers]

    stats = RoundStats(p, n, tau, pull_scalars_per_worker_per_round=n)
    # Round zero: every worker pushes its local gradient once.
    grad_parts = [
        decode_gradient(encode_gradient(w.objective.grad(x)), n) for w in workers
    ]
    stats.record_setup(n)

    master = MasterState(x, copies, _fold_matrices(copies), grad_parts, policy)
    trace = []
    iterates = [x.copy()] if config.keep_iterates else None
    hvps = 0
    reason = REASON_MAX_ITERS

    def worker_round(i, x_old, x_new):
        worker = workers[i]
        message, new_est = infvec(worker.est, x_old, x_new, worker.objective, tau, variant)
        payload = encode_infovec(message)
        grad_payload = encode_gradient(worker.objective.grad(x_new))
        return payload, grad_payload, new_est

    for k in range(config.max_iters + 1):
        grad = _fold_vectors(master.grads)
        grad_norm = float(np.linalg.norm(grad))
        f_value = sum(shard.f(x) for shard in shards)
        beta_k = beta(grad_norm, constants, p)
        sigma = delta = lam = potential = None
        if diagnose:
            sigma, delta, lam, potential = _diagnose_distributed(
                shards, x, grad, master, constants, p
            )

        if grad_norm <= config.tol or k == config.max_iters:
            reason = REASON_TOLERANCE if grad_norm <= config.tol else REASON_MAX_ITERS
            trace.append(
                IterationRecord(
                    k, f_value, grad_norm, None, beta_k, None,
                    hvp_calls=hvps, comm_rounds=stats.rounds,
                    scalars_pushed=stats.total_pushed, sigma_diag=sigma,
                    delta_diag=delta, lambda_diag=lam, potential_diag=potential,
                )
            )
            break

        factor = SpdFactor(master.aggregate)
        d = factor.solve(grad)
        dual = math.sqrt(max(float(d @ grad), 0.0))
        a_tau = policy.alpha_from_dual(dual)
        alpha = policy.select_alpha(dual, beta_k, theory=config.theory_stepsize)
        x_new = x - alpha * d

        if config.parallel_workers and p > 1:
            with ThreadPoolExecutor(max_workers=p) as pool:
                results = list(pool.map(lambda i: worker_round(i, x, x_new), range(p)))
        else:
            results = [worker_round(i, x, x_new) for i in range(p)]

        push_scalars = []
        r_max = 0.0
        for i in range(p):
            payload, grad_payload, new_est = results[i]
            message = decode_infovec(payload, n, tau)
            replayed = gupdate(copies[i], message, m_const, variant)
            if config.check_replay and replayed.matrix.tobytes() != new_est.matrix.tobytes():
                raise ReplayMismatchError(
                    "round %d: master copy of worker %d diverged" % (k, i)
                )
            copies[i] = replayed
            workers[i].est = new_est
            master.grads[i] = decode_gradient(grad_payload, n)
            ids = tau + 1
            reals = (len(payload) - ids * _UINT.size) // _REAL.size
            push_scalars.append(ids + reals + len(grad_payload) // _REAL.size)
            r_max = max(r_max, message.r_plus)
        stats.record_round(push_scalars)
        hvps += p * (tau + 2)
        master.aggregate = _fold_matrices(copies)
        master.rounds = stats.rounds

        trace.append(
            IterationRecord(
                k, f_value, grad_norm, alpha, beta_k, r_max,
                alpha_tau=a_tau, hvp_calls=hvps, comm_rounds=stats.rounds,
                scalars_pushed=stats.total_pushed, sigma_diag=sigma,
                delta_diag=delta, lambda_diag=lam, potential_diag=potential,
            )
        )
        x = x_new
        master.x = x
        if iterates is not None:
            iterates.append(x.copy())

    return SolverResult(
        x=x,
        iterations=len(trace) - 1,
        reason=reason,
        trace=trace,
        hvp_calls=hvps,
        iterates=iterates,
        round_stats=stats,
    )


def _diagnose_distributed(shards, x, grad, master, constants, p):
    """Aggregate sigma, per-worker-sum Delta, lambda, and the potential."""
    locals_h = [shard.explicit_hessian(x) for shard in shards]
    full = locals_h[0].copy()
    for h in locals_h[1:]:
        full += h
    full_factor = SpdFactor(full)
    sigma = sigma_metric(master.aggregate, full_factor)
    delta = 0.0
    for est, h in zip(master.copies, locals_h):
        delta += sigma_metric(est.matrix, SpdFactor(h))
    lam = math.sqrt(max(float(full_factor.solve(grad) @ grad), 0.0))
    potential = sigma + 4.0 * len(grad) * math.sqrt(p) * constants.concordance * lam
    return sigma, delta, lam, potential
