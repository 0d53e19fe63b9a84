"""Benchmark suites over the in-process trio or TCP party processes.

Every repetition runs in a fresh session, so rounds and bytes of different
repetitions can be compared directly. A repetition keeps the raw transcript
and the per-party online wall times; report rows are derived from those, so
reports written by separate party processes can be merged afterwards.

Timing covers the online phase only. Key generation, preparation and
offline staging happen before the clock starts.
"""

import json
import math
import statistics
import threading
import time
import traceback
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from ..errors import ChannelClosedError, ValidationError
from ..model import TOY, ModelConfig, gen_toy_model, layer_rounds
from ..model.secure import secure_generate, secure_layer_forward, secure_prepare, stage_layer
from ..party import Party, run_local
from ..pir.he import HEParams
from ..pir.predict import (prediction_setup, secure_prediction_argmax,
                           secure_prediction_offline)
from ..protocols.nonlinear import GELU, secure_nonlinear, secure_nonlinear_offline
from ..roles import Role
from ..sharing import ScaleHint, Share
from ..transport.link import LAN, LinkProfile
from ..transport.message import Phase
from ..transport.metrics import MB, Transcript

SCHEMA_VERSION = "1"
SUITES = ("nonlinear", "argmax", "layer", "generate")
DEFAULT_SIZE = {"nonlinear": 1000, "argmax": 1000, "layer": 4096, "generate": 20}
MIN_REPS = 3
HEAD_DIM = 128


@dataclass(frozen=True)
class BenchSpec:
    """What to measure.

    Attributes:
        suite: One of ``SUITES``.
        size: Element count (nonlinear), vocabulary size (argmax), model
            width (layer) or number of generated tokens (generate).
        profile: Emulated link applied to every party pair.
        reps: Repetitions per row, at least three.
        seed: Seeds the inputs and every party's randomness.
        model: Model for the generate suite.
        prompt_len: Prompt length for the generate suite.
        k_scale: Noise coefficient; defaults to the model's.
        scheme: Homomorphic scheme for retrieval, ``"bfv"`` or ``"stub"``.
    """

    suite: str
    size: int | None = None
    profile: LinkProfile = LAN
    reps: int = MIN_REPS
    seed: int = 0
    model: ModelConfig = TOY
    prompt_len: int = 6
    k_scale: float | None = None
    scheme: str = "bfv"

    def __post_init__(self):
        if self.suite not in SUITES:
            raise ValidationError(f"unknown suite {self.suite!r}; choose from {SUITES}")
        if self.reps < MIN_REPS:
            raise ValidationError(f"need at least {MIN_REPS} repetitions, got {self.reps}")
        if self.size is not None and self.size < 1:
            raise ValidationError("size must be positive")
        if self.prompt_len < 1:
            raise ValidationError("prompt_len must be positive")

    @property
    def n(self):
        return DEFAULT_SIZE[self.suite] if self.size is None else int(self.size)

    @property
    def k(self):
        return self.model.k_scale if self.k_scale is None else float(self.k_scale)

    def to_dict(self):
        p = self.profile
        bw = None if math.isinf(p.bandwidth_bits_per_s) else p.bandwidth_bits_per_s / 1e6
        return {"suite": self.suite, "size": self.n, "profile": p.label, "rtt_ms": p.rtt_ms,
                "bandwidth_mbps": bw, "reps": self.reps, "seed": self.seed,
                "model": asdict(self.model), "prompt_len": self.prompt_len,
                "k_scale": self.k, "scheme": self.scheme}

    def params_block(self):
        """Handshake payload: parties refuse to pair unless these bytes match."""
        return json.dumps(self.to_dict(), sort_keys=True).encode() + HEParams().to_bytes()


@dataclass
class BenchRow:
    suite: str
    size: int
    step: int | None
    profile: str
    party: str
    reps: int
    online_bytes: int
    online_mb: float
    online_rounds: int
    offline_mb: float
    preparation_mb: float
    time_mean_s: float | None
    time_std_s: float | None
    status: str = "ok"


ROW_FIELDS = tuple(f.name for f in fields(BenchRow))


@dataclass
class BenchReport:
    """Rows plus the raw per-repetition measurements they were derived from."""

    spec: dict = field(default_factory=dict)
    rows: list = field(default_factory=list)
    totals: dict = field(default_factory=dict)
    party: str = "all"
    failed: bool = False
    error: str | None = None
    raw: list = field(default_factory=list)
    schema_version: str = SCHEMA_VERSION


# workloads ---------------------------------------------------------------


def _p1_input(party, shape):
    """P1 holds the input in the clear; P0's share is zero."""
    if party.role == Role.P1:
        return Share(Role.P1, party.rng.standard_normal(shape))
    return Share(party.role, np.zeros(shape))


class _Nonlinear:
    def __init__(self, spec):
        self.spec = spec

    def __call__(self, sess):
        spec = self.spec
        party = Party.create(sess, spec.seed, k=spec.k)
        shape = (spec.n,)
        st = secure_nonlinear_offline(party, shape, GELU, hint_in=ScaleHint(1.0, "configured"))
        x = _p1_input(party, shape) if party.role != Role.P2 else None
        start = time.perf_counter()
        secure_nonlinear(party, st, x, GELU)
        return time.perf_counter() - start


class _Argmax:
    def __init__(self, spec):
        self.spec = spec

    def __call__(self, sess):
        spec = self.spec
        party = Party.create(sess, spec.seed, k=spec.k)
        ctx = prediction_setup(party, HEParams(), spec.scheme)
        st = secure_prediction_offline(party, spec.n, hint=ScaleHint(1.0, "configured"), ctx=ctx)
        x = _p1_input(party, (spec.n,)) if party.role != Role.P2 else None
        start = time.perf_counter()
        secure_prediction_argmax(party, st, x, ctx)
        return time.perf_counter() - start


class _Layer:
    """One block at width ``d`` (``d / 128`` heads, FFN ``4d``) on a single-token step.

    Runs in float32 so the d=4096 weights and their masks fit in memory.
    """

    def __init__(self, spec):
        d = spec.n
        self.spec = spec
        self.config = ModelConfig(n_vocab=16, d_model=d, n_heads=max(1, d // HEAD_DIM),
                                  n_layers=1, d_ffn=4 * d, max_seq=4, k_scale=spec.k,
                                  seed=spec.seed)
        self._params = None
        self._lock = threading.Lock()

    def params(self):
        with self._lock:
            if self._params is None:
                self._params = gen_toy_model(self.config)
            return self._params

    def __call__(self, sess):
        spec, cfg = self.spec, self.config
        party = Party.create(sess, spec.seed, k=spec.k, dtype=np.float32)
        params = self.params() if party.role == Role.P0 else None
        model = secure_prepare(party, cfg, params, scheme="stub")
        mat = stage_layer(party, model, 0, 1, 1)
        h = None
        if party.role != Role.P2:
            h = _p1_input(party, (1, cfg.d_model)).map(lambda x: x.astype(np.float32))
        start = time.perf_counter()
        secure_layer_forward(party, model, 0, mat, h)
        return time.perf_counter() - start


class _Generate:
    def __init__(self, spec):
        self.spec = spec
        self.config = spec.model.replace(k_scale=spec.k)
        self.params = gen_toy_model(self.config)
        rng = np.random.default_rng(spec.seed)
        self.prompt = rng.integers(0, self.config.n_vocab, spec.prompt_len)

    def __call__(self, sess):
        spec = self.spec
        party = Party.create(sess, spec.seed, k=spec.k)
        params = self.params if party.role == Role.P0 else None
        prompt = self.prompt if party.role == Role.P1 else None
        model = secure_prepare(party, self.config, params, scheme=spec.scheme)
        times = []
        secure_generate(party, model, prompt, spec.n, step_times=times)
        return times


WORKLOADS = {"nonlinear": _Nonlinear, "argmax": _Argmax, "layer": _Layer, "generate": _Generate}


# execution ---------------------------------------------------------------


def run_tcp(program, addresses, profile, *, role=None, params_block=b"", timeout=60.0):
    """Run ``program(session)`` over TCP.

    With ``role`` given, only that party runs here and the transcript holds
    the messages it sent. Without, all three parties run on threads of this
    process and their transcripts are merged.
    """
    from ..transport.tcp import connect_tcp

    roles = list(Role) if role is None else [Role.parse(role)]
    results, transcripts, errors = {}, {}, []

    def target(r):
        sess = None
        try:
            sess = connect_tcp(r, addresses, profile, params_block=params_block, timeout=timeout)
            results[r] = program(sess)
            transcripts[r] = sess.metrics_snapshot()
        except BaseException as exc:  # noqa: BLE001 - re-raised below
            errors.append((r, exc))
        finally:
            if sess is not None:
                sess.close()

    threads = [threading.Thread(target=target, args=(r,), name=f"tcp-{r.name}") for r in roles]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    if errors:
        primary = [e for e in errors if not isinstance(e[1], ChannelClosedError)] or errors
        raise primary[0][1]
    merged = Transcript()
    for tr in transcripts.values():
        merged = merged.merge(tr)
    return results, merged


def _elapsed(results):
    """Slowest party's online time (per step for the generate suite)."""
    vals = [v for v in results.values() if v is not None]
    if not vals:
        return None
    if isinstance(vals[0], list):
        return [max(col) for col in zip(*vals)]
    return max(vals)


def run_bench(spec: BenchSpec, *, addresses=None, role=None) -> BenchReport:
    """Run ``spec.reps`` repetitions and summarise them.

    By default the three parties run in-process. With ``addresses`` (role to
    ``(host, port)``) they talk over TCP, either all from this process or,
    with ``role``, only the named one. A failing repetition ends the run;
    the report then holds the completed repetitions and ``failed`` is set.
    """
    workload = WORKLOADS[spec.suite](spec)
    party = "all" if role is None else Role.parse(role).name.lower()
    report = BenchReport(spec=spec.to_dict(), party=party)
    block = spec.params_block()
    for _ in range(spec.reps):
        try:
            if addresses is None:
                results, tr = run_local(workload, spec.profile, timeout=600.0)
            else:
                results, tr = run_tcp(workload, addresses, spec.profile, role=role,
                                      params_block=block)
        except Exception as exc:  # noqa: BLE001 - recorded in the report
            report.failed = True
            report.error = "".join(traceback.format_exception_only(type(exc), exc)).strip()
            break
        report.raw.append({"transcript": tr.to_state(), "elapsed": _elapsed(results)})
    summarize(report)
    return report


def _stats(values):
    values = [v for v in values if v is not None]
    if not values:
        return None, None
    return statistics.fmean(values), (statistics.stdev(values) if len(values) > 1 else 0.0)


def summarize(report: BenchReport):
    """(Re)derive ``rows`` and ``totals`` from ``report.raw``."""
    spec = report.spec
    reps = [Transcript.from_state(r["transcript"]) for r in report.raw]
    times = [r["elapsed"] for r in report.raw]
    report.rows, report.totals = [], {}
    if not reps:
        if report.failed:
            report.rows.append(_row(spec, report.party, None, 0, None, None, None, "failed"))
        return report

    if spec["suite"] == "generate":
        keys = [tuple((s, v["bytes"], v["rounds"]) for s, v in tr.by_segment().items() if s > 0)
                for tr in reps]
        status = _status(report, keys)
        for i, (seg, nbytes, rounds) in enumerate(keys[0]):
            step_times = [t[i] if t is not None and i < len(t) else None for t in times]
            report.rows.append(_row(spec, report.party, seg, nbytes, rounds,
                                    (0.0, 0.0), step_times, status))
    else:
        keys = [(tr.bytes(), tr.rounds()) for tr in reps]
        status = _status(report, keys)
        tr = reps[0]
        report.rows.append(_row(spec, report.party, None, tr.bytes(), tr.rounds(),
                                (tr.megabytes(Phase.OFFLINE), tr.megabytes(Phase.PREPARATION)),
                                times, status))
    tr = reps[0]
    report.totals = {
        "preparation_mb": tr.megabytes(Phase.PREPARATION),
        "offline_mb": tr.megabytes(Phase.OFFLINE),
        "online_mb": tr.megabytes(Phase.ONLINE),
        "preparation_rounds": tr.rounds(Phase.PREPARATION),
        "offline_rounds": tr.rounds(Phase.OFFLINE),
        "online_rounds": tr.rounds(Phase.ONLINE),
    }
    return report


def _status(report, keys):
    if any(k != keys[0] for k in keys):
        return "nondeterministic"
    if report.failed:
        return f"failed after {len(keys)} reps"
    return "ok"


def _row(spec, party, step, nbytes, rounds, extra, times, status):
    offline, prep = extra if extra else (0.0, 0.0)
    mean, std = _stats(times or [])
    return BenchRow(suite=spec["suite"], size=spec["size"], step=step, profile=spec["profile"],
                    party=party, reps=len(times or []), online_bytes=nbytes,
                    online_mb=nbytes / MB, online_rounds=rounds, offline_mb=offline,
                    preparation_mb=prep, time_mean_s=mean, time_std_s=std, status=status)


def merge_reports(reports):
    """Combine the reports of the three party processes of one TCP run."""
    if not reports:
        raise ValidationError("nothing to merge")
    spec = reports[0].spec
    if any(r.spec != spec for r in reports):
        raise ValidationError("reports were produced for different benchmark specs")
    n = min(len(r.raw) for r in reports)
    raw = []
    for i in range(n):
        tr = Transcript()
        for r in reports:
            tr = tr.merge(Transcript.from_state(r.raw[i]["transcript"]))
        raw.append({"transcript": tr.to_state(),
                    "elapsed": _elapsed({j: r.raw[i]["elapsed"] for j, r in enumerate(reports)})})
    failed = any(r.failed for r in reports)
    error = "; ".join(r.error for r in reports if r.error) or None
    return summarize(BenchReport(spec=spec, party="all", failed=failed, error=error, raw=raw))


def check_report(report: BenchReport):
    """Threshold violations for ``--assert``; an empty list means every check passed."""
    spec, out = report.spec, []
    if report.failed:
        out.append(f"run failed: {report.error}")
    for row in report.rows:
        if row.status != "ok":
            out.append(f"row status {row.status}")
    if not report.rows or report.failed:
        return out
    suite, n = spec["suite"], spec["size"]
    row = report.rows[0]
    if suite == "nonlinear":
        if row.online_rounds != 3:
            out.append(f"nonlinear took {row.online_rounds} rounds, expected 3")
        if row.online_mb > 0.015 * n / 1000:
            out.append(f"nonlinear sent {row.online_mb:.4f} MB, limit {0.015 * n / 1000:.4f}")
    elif suite == "argmax":
        if row.online_rounds != 4:
            out.append(f"argmax took {row.online_rounds} rounds, expected 4")
        if n <= 100_000 and row.online_mb > 8.0:
            out.append(f"argmax sent {row.online_mb:.3f} MB, limit 8")
    elif suite == "layer":
        want = layer_rounds()
        if row.online_rounds != want or not 16 <= row.online_rounds <= 24:
            out.append(f"layer took {row.online_rounds} rounds, expected {want}")
        limit = 1.0 * n / 4096
        if row.online_mb > limit:
            out.append(f"layer sent {row.online_mb:.3f} MB, limit {limit:.3f}")
    elif suite == "generate":
        later = [r.online_bytes for r in report.rows[1:]]
        if len(later) >= 2:
            cv = statistics.pstdev(later) / statistics.fmean(later)
            if cv >= 0.05:
                out.append(f"per-token bytes vary by {cv:.1%} after the first step")
    return out
