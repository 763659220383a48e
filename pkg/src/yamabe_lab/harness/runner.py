"""Simulation and verification drivers used by the command line."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import flow, monitors, pinch_algebra, reference
from ..conformal import UNDEFINED, Chart, build_field, is_undefined
from ..errors import ConfigError, InsufficientHistory
from .config import RunConfig
from .persist import Checkpoint, read_checkpoint, read_records, write_checkpoint, write_records

RECORDS_FILE = "records.csv"
CHECKPOINT_FILE = "checkpoint.txt"
SUMMARY_FILE = "run.txt"


@dataclass
class SimulationSummary:
    stop_reason: flow.StopReason
    t_final: float
    steps: int
    T_hat: float
    verdict: monitors.SingularityVerdict | None
    records: list
    out_dir: Path

    def lines(self) -> list:
        out = [
            f"stop_reason = {self.stop_reason.value}",
            f"t_final = {self.t_final!r}",
            f"steps = {self.steps}",
            f"T_hat = {'NA' if is_undefined(self.T_hat) else repr(self.T_hat)}",
        ]
        if self.verdict is None:
            out.append("verdict = unavailable (InsufficientHistory)")
        else:
            v = self.verdict
            out.append(f"verdict = {v.kind.value}")
            for name in ("Omega", "A"):
                val = getattr(v, name)
                if not is_undefined(val):
                    out.append(f"{name} = {val!r}")
        return out


def worker_count() -> int:
    """Workers allowed by YFL_THREADS (default 1)."""
    raw = os.environ.get("YFL_THREADS", "1")
    try:
        cap = int(raw)
    except ValueError:
        raise ConfigError(f"YFL_THREADS must be an integer, got {raw!r}") from None
    return max(1, min(cap, os.cpu_count() or 1))


def _blowup_time(records) -> float:
    try:
        return flow.estimate_blowup_time([(r.t, r.sup_R) for r in records])
    except InsufficientHistory:
        return UNDEFINED


def simulate(cfg: RunConfig, out_dir=None, resume=None) -> SimulationSummary:
    out = Path(out_dir or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    collector = monitors.RecordCollector(fixed_delta=cfg.fixed_delta)
    if resume is not None:
        ck = read_checkpoint(resume)
        f = ck.field
        if (f.n, f.chart, f.N) != (cfg.n, cfg.chart, cfg.N):
            raise ConfigError("checkpoint does not match the configuration (n, chart, N)")
        state = flow.FlowState(f, ck.dt, ck.step_index, [], cfg.cfl_safety)
        collector.eps0, collector.delta, collector.gap0 = ck.eps0, ck.delta, ck.gap0
        collector.initialized = True
        prior = read_records(out / RECORDS_FILE)[: ck.record_count]
        threshold = ck.blow_threshold
    else:
        f = cfg.build_field()
        state = flow.FlowState.start(f, cfg.cfl_safety)
        prior = []
        threshold = flow.blowup_threshold(f, cfg.blowup_factor)

    new_records = []

    def monitor(prev, cur, dt):
        rec = collector(prev, cur, dt)
        new_records.append(rec)
        return rec

    def checkpoint(st):
        if cfg.checkpoint_every and st.step_index % cfg.checkpoint_every == 0:
            write_records(out / RECORDS_FILE, prior + new_records)
            write_checkpoint(out / CHECKPOINT_FILE, Checkpoint(
                st.field, st.dt, st.step_index, cfg.cfl_safety, threshold,
                collector.eps0, collector.delta, collector.gap0, len(prior) + len(new_records),
            ))

    result = flow.run(state, cfg.t_end, monitor=monitor, callbacks=[checkpoint],
                      record_every=cfg.record_every, threshold=threshold, keep_trajectory=False)
    records = prior + new_records
    T_hat = UNDEFINED
    if result.stop_reason is flow.StopReason.BLOWUP:
        T_hat = _blowup_time(records)
        records = monitors.with_blowup_time(records, T_hat)
    try:
        verdict = monitors.classify_singularity(records, result.stop_reason, cfg.t_end)
    except InsufficientHistory:
        verdict = None
    write_records(out / RECORDS_FILE, records)
    summary = SimulationSummary(result.stop_reason, result.state.t, result.state.step_index,
                                T_hat, verdict, records, out)
    (out / SUMMARY_FILE).write_text("\n".join(summary.lines()) + "\n")
    return summary


def read_stop_reason(records_path: Path, records) -> flow.StopReason:
    """Stop reason from the run summary next to the records, else from the table."""
    summary = records_path.parent / SUMMARY_FILE
    if summary.exists():
        for line in summary.read_text().splitlines():
            key, _, value = line.partition("=")
            if key.strip() == "stop_reason":
                return flow.StopReason(value.strip())
    if any(not is_undefined(r.Tm_t_supR) for r in records):
        return flow.StopReason.BLOWUP
    return flow.StopReason.REACHED_T_END


# ---------------------------------------------------------------------------
# verification


@dataclass
class VerifyReport:
    lines: list = field(default_factory=list)
    failures: int = 0

    def check(self, name: str, ok: bool, detail: str = ""):
        self.lines.append(f"{'PASS' if ok else 'FAIL'} {name}{' ' + detail if detail else ''}")
        if not ok:
            self.failures += 1

    def note(self, text: str):
        self.lines.append(f"NOTE {text}")


ODE_GRID = (
    (0.10, 3, 0.5), (0.20, 3, 1.0), (1 / 3, 3, 0.1), (0.05, 4, 2.0), (0.25, 4, 0.3),
    (0.02, 5, 1.0), (0.20, 5, 0.05), (0.10, 6, 0.7), (1 / 6, 6, 1.5), (0.01, 8, 0.2),
)


def verify(samples: int, seed: int, workers: int = 1) -> VerifyReport:
    rep = VerifyReport()
    fuzz = pinch_algebra.fuzz_suite(samples, range(3, 9), seed, workers=workers)
    for line in fuzz.lines():
        if line.startswith(("PASS", "FAIL")):
            rep.check(line[5:], line.startswith("PASS"))
        else:
            rep.lines.append(line)

    for eps, n, f0 in ODE_GRID:
        t0 = 0.05
        o = pinch_algebra.ode_comparison(eps, n, f0, t0, 100 * t0)
        ok = o.max_rel_error <= pinch_algebra.ODE_TOL and o.bound_holds in (True, None)
        rep.check(f"comparison_ode eps={eps:.4g} n={n} f0={f0:g}", ok,
                  f"max_rel_error={o.max_rel_error:.3e} bound={o.bound_holds}")

    for lam in ((1.0, 1.0, 2.0), (1.0, 2.0, 3.0), (0.5, 1.0, 1.5, 4.0)):
        a = pinch_algebra.a_matrix_diagonal(lam)
        rep.check(f"nu_nonnegative {lam}", bool(np.all(a.reference >= 0)))
        if np.max(np.abs(a.difference)) > 1e-12:
            rep.note(f"literal A_ii {a.literal.tolist()} differs from nu_i {a.reference.tolist()} for {lam}")

    worst = 0.0
    for t in np.linspace(0.0, 0.16, 17):
        scale, R = reference.homothety(6.0, 3, t)
        worst = max(worst, abs((1 / 6 - t) * R - 1.0), abs(-6.0 + R * scale))
    rep.check("homothety_identities", worst <= 1e-12, f"worst={worst:.3e}")

    f = build_field(Chart.RADIAL, 3, 129, r_max=2.0)
    probe = reference.soliton_residual(f, reference.dilation_field(f, 0.5), 0.5)
    rep.check("flat_dilation_soliton", max(probe.residual_soliton, probe.residual_gradient_eq) <= 1e-10,
              f"soliton={probe.residual_soliton:.3e} gradient={probe.residual_gradient_eq:.3e}")
    zero = reference.soliton_residual(f, np.zeros(f.phi.shape), 0.5)
    rep.check("zero_field_soliton", abs(zero.residual_soliton - math.sqrt(3) / 0.5) <= 1e-10)
    return rep
