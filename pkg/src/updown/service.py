"""Live trial conduct: session lifecycle, append-only persistence, and the
HTTP/JSON surface the conductor UI consumes.

Every acknowledged response is fsynced to the session's event log before the
reply goes out; replaying the log reconstructs the session exactly.
"""

from __future__ import annotations

import json
import os
import threading
import time
import uuid
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import HTMLResponse, JSONResponse

from .bayes import (
    CBud,
    CcdBud,
    LogisticModel,
    PowerModel,
    RBud,
    WeibullModel,
    default_power_model,
    posterior_summary,
)
from .designs import (
    Bcd,
    BoundaryPolicy,
    DesignRule,
    Gud,
    Kr,
    Orientation,
    Sud,
    TreatmentGrid,
    detect_reversals,
)
from .estimators import (
    AllFromReversal,
    AutoDetect,
    ReversalOnly,
    Wbar,
    auto_detect_cutoff,
    averaging_estimate,
    cir_confidence,
    tabulate,
)
from .simlab import BudPolicy, CcdPolicy, CrmPolicy, PolicyDriver, policy_target


class ServiceError(Exception):
    def __init__(self, status, code, message, field_name=None):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message
        self.field = field_name

    def body(self):
        out = {"code": self.code, "message": self.message}
        if self.field:
            out["field"] = self.field
        return out


# ---------------------------------------------------------------------------
# Config (de)serialization
# ---------------------------------------------------------------------------


def _bad(field_name, message):
    return ServiceError(400, "invalid-config", message, field_name)


def rule_from_dict(d) -> DesignRule:
    kind = d.get("kind")
    orient = Orientation.ABOVE_MEDIAN if d.get("orientation") == "above" else Orientation.BELOW_MEDIAN
    try:
        if kind == "sud":
            return Sud(orientation=orient)
        if kind == "bcd":
            return Bcd(orientation=orient, gamma=float(d["gamma"]))
        if kind == "kr":
            return Kr(orientation=orient, k=int(d["k"]))
        if kind == "gud":
            return Gud(orientation=orient, k=int(d["k"]), a=int(d["a"]), b=int(d["b"]))
    except (KeyError, ValueError) as exc:
        raise _bad("policy", f"bad design parameters: {exc}") from exc
    raise _bad("policy.kind", f"unknown design kind {kind!r}")


def rule_to_dict(rule: DesignRule) -> dict:
    orient = "above" if rule.orientation is Orientation.ABOVE_MEDIAN else "below"
    if isinstance(rule, Sud):
        return {"kind": "sud", "orientation": orient}
    if isinstance(rule, Bcd):
        return {"kind": "bcd", "gamma": rule.gamma, "orientation": orient}
    if isinstance(rule, Kr):
        return {"kind": "kr", "k": rule.k, "orientation": orient}
    return {"kind": "gud", "k": rule.k, "a": rule.a, "b": rule.b, "orientation": orient}


def model_from_dict(d, grid, p):
    if d is None:
        return default_power_model(grid, p)
    kind = d.get("kind")
    levels = tuple(float(v) for v in d.get("levels", grid.levels))
    if kind == "power":
        return PowerModel(
            levels=levels,
            skeleton=tuple(float(v) for v in d["skeleton"]),
            prior_mean=float(d.get("prior_mean", 0.0)),
            prior_sd=float(d.get("prior_sd", 0.75)),
        )
    if kind == "logistic":
        return LogisticModel(
            levels=levels,
            loc_mean=float(d["loc_mean"]),
            loc_sd=float(d["loc_sd"]),
            log_scale_mean=float(d["log_scale_mean"]),
            log_scale_sd=float(d.get("log_scale_sd", 0.5)),
        )
    if kind == "weibull":
        return WeibullModel(
            levels=levels,
            log_shape_mean=float(d["log_shape_mean"]),
            log_shape_sd=float(d["log_shape_sd"]),
            log_scale_mean=float(d["log_scale_mean"]),
            log_scale_sd=float(d["log_scale_sd"]),
        )
    raise _bad("policy.model.kind", f"unknown model kind {kind!r}")


def model_to_dict(model):
    if isinstance(model, PowerModel):
        return {
            "kind": "power", "levels": list(model.levels),
            "skeleton": list(model.skeleton),
            "prior_mean": model.prior_mean, "prior_sd": model.prior_sd,
        }
    if isinstance(model, LogisticModel):
        return {
            "kind": "logistic", "levels": list(model.levels),
            "loc_mean": model.loc_mean, "loc_sd": model.loc_sd,
            "log_scale_mean": model.log_scale_mean, "log_scale_sd": model.log_scale_sd,
        }
    return {
        "kind": "weibull", "levels": list(model.levels),
        "log_shape_mean": model.log_shape_mean, "log_shape_sd": model.log_shape_sd,
        "log_scale_mean": model.log_scale_mean, "log_scale_sd": model.log_scale_sd,
    }


def policy_from_dict(d, grid):
    kind = d.get("kind")
    if kind in ("sud", "bcd", "kr", "gud"):
        return rule_from_dict(d)
    if kind == "crm":
        p = float(d["p"])
        return CrmPolicy(
            model=model_from_dict(d.get("model"), grid, p),
            p=p,
            rule=d.get("rule", "closest-response"),
            constrained=bool(d.get("constrained", True)),
            alpha=float(d.get("alpha", 0.25)),
            center=d.get("center", "mean"),
        )
    if kind == "ccd":
        w = d.get("window")
        return CcdPolicy(p=float(d["p"]), window=tuple(w) if w else None)
    if kind in ("cbud", "rbud", "ccdbud"):
        ud = rule_from_dict(d["ud"])
        p = float(d.get("p", ud.target()))
        if kind == "cbud":
            hybrid = CBud(
                beta_lo=float(d.get("beta_lo", d.get("beta", 0.15))),
                beta_hi=float(d.get("beta_hi", d.get("beta", 0.15))),
                cutoff=int(d.get("cutoff", 0)),
                opposite_rule=d.get("opposite_rule", "A"),
            )
        elif kind == "rbud":
            hybrid = RBud(n0=int(d.get("n0", 20)), cutoff=int(d.get("cutoff", 0)))
        else:
            hybrid = CcdBud(
                p=p,
                beta=float(d.get("beta", 0.25)),
                cutoff=int(d.get("cutoff", 0)),
                ci_option=d.get("ci_option", "binomial"),
                opposite_rule=d.get("opposite_rule", "A"),
            )
        model = None
        if kind != "ccdbud":
            model = model_from_dict(d.get("model"), grid, p)
        return BudPolicy(
            ud_rule=ud, hybrid=hybrid, model=model, p=p,
            crm_rule=d.get("rule", "closest-treatment"),
            center=d.get("center", "median"),
        )
    raise _bad("policy.kind", f"unknown policy kind {kind!r}")


def policy_to_dict(policy):
    if isinstance(policy, DesignRule):
        return rule_to_dict(policy)
    if isinstance(policy, CrmPolicy):
        return {
            "kind": "crm", "p": policy.p, "rule": policy.rule,
            "constrained": policy.constrained, "alpha": policy.alpha,
            "center": policy.center, "model": model_to_dict(policy.model),
        }
    if isinstance(policy, CcdPolicy):
        return {"kind": "ccd", "p": policy.p,
                "window": list(policy.window) if policy.window else None}
    h = policy.hybrid
    base = {
        "ud": rule_to_dict(policy.ud_rule), "p": policy.p,
        "rule": policy.crm_rule, "center": policy.center,
    }
    if isinstance(h, CBud):
        base.update(kind="cbud", beta_lo=h.beta_lo, beta_hi=h.beta_hi,
                    cutoff=h.cutoff, opposite_rule=h.opposite_rule,
                    model=model_to_dict(policy.model))
    elif isinstance(h, RBud):
        base.update(kind="rbud", n0=h.n0, cutoff=h.cutoff,
                    model=model_to_dict(policy.model))
    else:
        base.update(kind="ccdbud", beta=h.beta, cutoff=h.cutoff,
                    ci_option=h.ci_option, opposite_rule=h.opposite_rule)
    return base


@dataclass
class TrialConfig:
    grid: TreatmentGrid
    policy: object
    start_index: int
    n: int | None  # fixed sample size; None runs open-ended
    seed: int
    target: float
    ci_option: str = "poisson"
    percentiles: tuple[float, ...] = (0.025, 0.975)

    @classmethod
    def from_dict(cls, d, seed_factory):
        try:
            g = d["grid"]
            boundary = BoundaryPolicy(g.get("boundary", "reflecting"))
            if "levels" in g:
                grid = TreatmentGrid(tuple(float(v) for v in g["levels"]), boundary)
            else:
                grid = TreatmentGrid.from_bounds(
                    float(g["lo"]), float(g["hi"]), int(g["m"]), boundary
                )
        except ServiceError:
            raise
        except Exception as exc:
            raise _bad("grid", f"bad grid: {exc}") from exc
        policy = policy_from_dict(d.get("policy") or {}, grid)
        try:
            start = int(d["start_level"])
        except Exception as exc:
            raise _bad("start_level", "start_level is required") from exc
        if not 1 <= start <= grid.m:
            raise _bad("start_level", f"start_level must lie in [1, {grid.m}]")
        n = d.get("n")
        n = int(n) if n is not None else None
        if n is not None and n < 1:
            raise _bad("n", "n must be positive")
        seed = d.get("seed")
        seed = int(seed) if seed is not None else seed_factory()
        est = d.get("estimation") or {}
        target = float(est.get("target", policy_target(policy)))
        if not 0.0 < target < 1.0:
            raise _bad("estimation.target", "target must lie in (0, 1)")
        percentiles = tuple(float(v) for v in est.get("percentiles", (0.025, 0.975)))
        return cls(
            grid=grid, policy=policy, start_index=start, n=n, seed=seed,
            target=target, ci_option=est.get("ci", "poisson"),
            percentiles=percentiles,
        )

    def to_dict(self):
        return {
            "grid": {
                "levels": list(self.grid.levels),
                "boundary": self.grid.boundary.value,
            },
            "policy": policy_to_dict(self.policy),
            "start_level": self.start_index,
            "n": self.n,
            "seed": self.seed,
            "estimation": {
                "target": self.target,
                "ci": self.ci_option,
                "percentiles": list(self.percentiles),
            },
        }


# ---------------------------------------------------------------------------
# Sessions
# ---------------------------------------------------------------------------

SNAPSHOT_EVERY = 20


@dataclass
class TrialSession:
    id: str
    created_at: float
    config: TrialConfig
    driver: PolicyDriver
    events: int = 0  # response/deviation events applied
    lock: threading.Lock = field(default_factory=threading.Lock)

    @property
    def status(self):
        if self.config.n is not None and self.driver.n >= self.config.n:
            return "completed"
        return "active"


class TrialStore:
    """Sessions persisted as one JSON-lines event file each, plus periodic
    snapshots; loading replays the log."""

    def __init__(self, data_dir, clock=None, id_factory=None):
        self.data_dir = data_dir
        os.makedirs(data_dir, exist_ok=True)
        self.clock = clock or time.time
        self.id_factory = id_factory or (lambda: uuid.uuid4().hex[:12])
        self.sessions: dict[str, TrialSession] = {}
        self._global = threading.Lock()
        self._load_existing()

    # -- persistence -------------------------------------------------------

    def _path(self, sid):
        return os.path.join(self.data_dir, f"{sid}.jsonl")

    def _append(self, sid, event):
        line = json.dumps(event, sort_keys=True)
        with open(self._path(sid), "a", encoding="utf-8") as fh:
            fh.write(line + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    def _snapshot(self, session):
        path = os.path.join(self.data_dir, f"{session.id}.snapshot.json")
        body = {
            "id": session.id,
            "events": session.events,
            "trials": session.driver.n,
            "recommendation": session.driver.recommendation,
            "status": session.status,
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(body, fh, sort_keys=True)

    def _load_existing(self):
        for name in sorted(os.listdir(self.data_dir)):
            if name.endswith(".jsonl"):
                sid = name[: -len(".jsonl")]
                try:
                    self.sessions[sid] = self._replay_file(sid)
                except Exception:
                    continue  # unreadable session files are skipped, not fatal

    def _replay_file(self, sid):
        session = None
        with open(self._path(sid), encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                event = json.loads(line)
                session = self._apply_event(sid, event, session)
        if session is None:
            raise ValueError(f"session file {sid} has no creation event")
        return session

    def _apply_event(self, sid, event, session):
        kind = event.get("type")
        if kind == "created":
            config = TrialConfig.from_dict(event["config"], lambda: 0)
            driver = PolicyDriver(
                config.grid, config.policy, config.start_index,
                design_rng=np.random.default_rng(config.seed),
            )
            return TrialSession(
                id=sid, created_at=event.get("at", 0.0), config=config, driver=driver
            )
        if kind in ("response", "deviation"):
            if session is None:
                raise ValueError("response before creation")
            forced = event.get("administered_level")
            session.driver.record(event["response"] == "yes", forced_index=forced)
            session.events += 1
            return session
        return session  # unknown event kinds are tolerated for forward compat

    # -- API ---------------------------------------------------------------

    def create(self, config_dict):
        config = TrialConfig.from_dict(config_dict, lambda: int(uuid.uuid4().int % 2**31))
        with self._global:
            sid = self.id_factory()
            while sid in self.sessions:
                sid = self.id_factory()
            now = float(self.clock())
            self._append(sid, {"type": "created", "at": now, "config": config.to_dict()})
            driver = PolicyDriver(
                config.grid, config.policy, config.start_index,
                design_rng=np.random.default_rng(config.seed),
            )
            session = TrialSession(id=sid, created_at=now, config=config, driver=driver)
            self.sessions[sid] = session
        return session

    def get(self, sid) -> TrialSession:
        try:
            return self.sessions[sid]
        except KeyError:
            raise ServiceError(404, "unknown-trial", f"no trial {sid!r}") from None

    def record(self, sid, response, note=None, step=None, administered_level=None):
        session = self.get(sid)
        with session.lock:
            if session.status == "completed":
                raise ServiceError(409, "trial-completed", "trial already has its full sample")
            expected = session.driver.n + 1
            if step is not None and int(step) != expected:
                raise ServiceError(
                    409, "stale-step",
                    f"expected response for trial {expected}, got step {step}",
                )
            if administered_level is not None:
                administered_level = int(administered_level)
                if not 1 <= administered_level <= session.config.grid.m:
                    raise ServiceError(400, "invalid-level", "administered level outside grid",
                                       "administered_level")
            event = {
                "type": "deviation" if administered_level is not None else "response",
                "at": float(self.clock()),
                "trial": expected,
                "response": "yes" if response else "no",
            }
            if note:
                event["note"] = str(note)
            if administered_level is not None:
                event["administered_level"] = administered_level
            self._append(sid, event)  # fsynced before the state advances
            session.driver.record(bool(response), forced_index=administered_level)
            session.events += 1
            if session.events % SNAPSHOT_EVERY == 0:
                self._snapshot(session)
            return session

    def export(self, sid):
        session = self.get(sid)
        with open(self._path(sid), encoding="utf-8") as fh:
            return fh.read()

    def import_session(self, text):
        with self._global:
            sid = self.id_factory()
            while sid in self.sessions:
                sid = self.id_factory()
            path = self._path(sid)
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text)
                fh.flush()
                os.fsync(fh.fileno())
            try:
                session = self._replay_file(sid)
            except Exception as exc:
                os.unlink(path)
                raise ServiceError(400, "bad-import", f"cannot replay session: {exc}")
            session.id = sid
            self.sessions[sid] = session
        return session


# ---------------------------------------------------------------------------
# Views
# ---------------------------------------------------------------------------


def session_view(session: TrialSession) -> dict:
    driver = session.driver
    chain = [
        {
            "trial": i + 1,
            "level": driver.level_indices[i],
            "treatment": driver.treatments[i],
            "response": "yes" if driver.responses[i] else "no",
        }
        for i in range(driver.n)
    ]
    view = {
        "id": session.id,
        "created_at": session.created_at,
        "status": session.status,
        "config": session.config.to_dict(),
        "chain": chain,
        "trials": driver.n,
        "recommendation": {
            "level": driver.recommendation,
            "treatment": driver.grid.value(driver.recommendation),
        },
        "diagnostics": _diagnostics(session),
    }
    return view


def _diagnostics(session: TrialSession) -> dict:
    driver = session.driver
    out = {"reversals": 0, "ad_cutoff": None}
    if driver.n:
        try:
            out["reversals"] = detect_reversals(driver.responses).count
        except ValueError:
            pass
    if driver.n >= 3:
        out["ad_cutoff"] = int(auto_detect_cutoff(np.asarray(driver.treatments)))
    policy = driver.policy
    if isinstance(policy, (CrmPolicy, BudPolicy)) and driver.n and (
        not isinstance(policy, BudPolicy) or not isinstance(policy.hybrid, CcdBud)
    ):
        model = policy.model
        p = policy.p if isinstance(policy, CrmPolicy) else policy.target()
        quad = policy.quad
        summary = posterior_summary(model, driver.table(), p, quad)
        out["posterior_qp"] = {
            "mean": summary.qp_mean,
            "q0.25": summary.qp_quantile(0.25),
            "q0.5": summary.qp_quantile(0.5),
            "q0.75": summary.qp_quantile(0.75),
        }
    return out


_ESTIMATOR_KINDS = {
    "wbar": lambda: Wbar(1),
    "w": lambda: ReversalOnly(1),
    "v": lambda: AllFromReversal(1),
    "ad": lambda: AutoDetect(),
}


def estimates_view(session: TrialSession, estimators, target, ci_option, percentiles):
    driver = session.driver
    if driver.n < 2:
        return {"insufficient_data": True, "trials": driver.n, "estimates": []}
    grid = session.config.grid
    s = grid.spacing
    out = []
    for name in estimators:
        try:
            if name in ("ir", "cir"):
                table = tabulate(zip(driver.treatments, driver.responses))
                est = cir_confidence(
                    table, target, option=ci_option, percentiles=percentiles,
                    x_bounds=(grid.levels[0] - s, grid.levels[-1] + s),
                    flavor=name.upper(),
                )
            elif name in _ESTIMATOR_KINDS:
                values = (
                    driver.state.treatments(virtual=True)
                    if driver.state is not None
                    else driver.treatments
                )
                est = averaging_estimate(
                    values, driver.responses, _ESTIMATOR_KINDS[name](), percentiles
                )
            else:
                out.append({"name": name, "error": f"unknown estimator {name!r}"})
                continue
        except ValueError as exc:
            out.append({"name": name, "error": str(exc)})
            continue
        se = est.se
        out.append(
            {
                "name": name,
                "point": est.point,
                "se": None if se != se else se,  # NaN -> null
                "df": est.df,
                "percentiles": list(est.percentiles),
                "interval": list(est.interval),
                "method": est.method,
            }
        )
    return {"insufficient_data": False, "trials": driver.n, "estimates": out}


# ---------------------------------------------------------------------------
# HTTP app
# ---------------------------------------------------------------------------


def create_app(data_dir, clock=None, id_factory=None, frontend_dir=None) -> FastAPI:
    app = FastAPI(title="updown trial service")
    store = TrialStore(data_dir, clock=clock, id_factory=id_factory)
    app.state.store = store

    @app.exception_handler(ServiceError)
    async def _service_error(_request: Request, exc: ServiceError):
        return JSONResponse(status_code=exc.status, content=exc.body())

    @app.post("/trials")
    async def create_trial(request: Request):
        body = await request.json()
        session = store.create(body)
        return {
            "id": session.id,
            "recommendation": session_view(session)["recommendation"],
            "status": session.status,
        }

    @app.get("/trials")
    async def list_trials():
        return {
            "trials": [
                {"id": s.id, "status": s.status, "trials": s.driver.n}
                for s in store.sessions.values()
            ]
        }

    @app.get("/trials/{sid}")
    async def get_trial(sid: str):
        return session_view(store.get(sid))

    @app.post("/trials/{sid}/responses")
    async def record_response(sid: str, request: Request):
        body = await request.json()
        response = body.get("response")
        if response not in ("yes", "no"):
            raise ServiceError(400, "invalid-response", "response must be yes or no", "response")
        session = store.record(
            sid,
            response == "yes",
            note=body.get("note"),
            step=body.get("step"),
            administered_level=body.get("administered_level"),
        )
        return session_view(session)

    @app.get("/trials/{sid}/what-if")
    async def what_if(sid: str):
        session = store.get(sid)
        if session.status == "completed":
            raise ServiceError(409, "trial-completed", "trial already has its full sample")
        return {
            "yes": session.driver.preview(True),
            "no": session.driver.preview(False),
        }

    @app.get("/trials/{sid}/estimates")
    async def estimates(sid: str, target: float | None = None,
                        estimators: str = "cir,ad", ci: str | None = None):
        session = store.get(sid)
        cfg = session.config
        return estimates_view(
            session,
            [e.strip() for e in estimators.split(",") if e.strip()],
            cfg.target if target is None else float(target),
            cfg.ci_option if ci is None else ci,
            cfg.percentiles,
        )

    @app.get("/trials/{sid}/export")
    async def export(sid: str):
        return {"id": sid, "events": store.export(sid)}

    @app.post("/trials/import")
    async def import_trial(request: Request):
        body = await request.json()
        text = body.get("events")
        if not isinstance(text, str):
            raise ServiceError(400, "bad-import", "body must carry an events string", "events")
        session = store.import_session(text)
        return {"id": session.id, "status": session.status, "trials": session.driver.n}

    if frontend_dir and os.path.isdir(frontend_dir):
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=frontend_dir, html=True), name="ui")

    @app.get("/", response_class=HTMLResponse)
    async def index():
        return "<html><body><h1>updown trial service</h1><p>POST /trials to begin.</p></body></html>"

    return app
