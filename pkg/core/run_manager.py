"""
coalgene run manager.

This module takes a validated RunConfig through to its outputs: it sets up
logging, tracing and the worker pool, dispatches the command to the domain
modules, writes the result and maps the outcome to an exit code.
"""

from __future__ import annotations

import logging
import os
import sys
from typing import Any, Callable, Optional

from dotenv import load_dotenv
from opentelemetry import trace

from core.coag_measures import BetaMeasure, KingmanMeasure, PointMassMeasure, XiMeasure, coagulation_rate, lambda_rate
from core.diagnostics import (
    check_bottleneck_regimes,
    check_discrete_limit,
    check_em_equivalence,
    check_em_theorem,
    check_kingman_criterion,
    check_lambda_criterion,
    check_pd_theorem,
    check_replacement_equivalence,
    check_semigroup,
    check_xi_functionals,
)
from core.engine import SimulationSpec, estimate_cn, estimate_transition, exact_cn, simulate
from core.montecarlo import EstimateWithError, configure_workers
from core.partitions import enumerate_partitions
from core.pd_analysis import pd_summary
from core.population_models import BottleneckModel, ExponentialModel, ModelSpec, PDPowerModel
from core.reporting import CheckReport
from core.special_fn import (
    PDParams,
    ell_const,
    em_const,
    em_theorem_constants,
    exp_gamma_s_infty,
    k_const,
)
from services.config_parser import ConfigError, RunConfig, to_limit, to_model_spec, to_rho
from services.report_generator import CoalgeneReportWriter

logger = logging.getLogger(__name__)
tracer = trace.get_tracer(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_FAIL = 2
EXIT_INDETERMINATE = 3
VERDICT_EXIT_CODES = {"pass": EXIT_OK, "fail": EXIT_FAIL, "indeterminate": EXIT_INDETERMINATE}

MAX_RATES_N = 7

_telemetry_configured = False


def _truthy(value: str | None) -> bool:
    return (value or "").strip().lower() in {"1", "true", "yes", "on"}


def configure_logging(level_name: str | None = None) -> None:
    """Route log records to stderr at the level named by COALGENE_LOG."""
    level_name = (level_name or os.getenv("COALGENE_LOG") or "WARNING").upper()
    level = logging.getLevelName(level_name)
    if not isinstance(level, int):
        raise ValueError(f"COALGENE_LOG must name a logging level, got {level_name!r}")
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s", force=True)


class CoalgeneRunManager:
    """
    Runs coalgene commands from validated configurations.

    One manager serves any number of runs; environment-driven setup (dotenv,
    logging, tracing, worker count) happens once at construction.
    """

    def __init__(
        self,
        progress_callback: Optional[Callable] = None,
        output_callback: Optional[Callable] = None,
        error_callback: Optional[Callable] = None,
        writer: CoalgeneReportWriter | None = None,
    ):
        """
        Initialize the run manager.

        Args:
            progress_callback: Called with (step_name, progress_percent, step_data)
            output_callback: Called with (source, content, output_type)
            error_callback: Called with (error_message)
            writer: Output writer; defaults to one writing to stdout
        """
        self.progress_callback = progress_callback
        self.output_callback = output_callback
        self.error_callback = error_callback
        self.writer = writer or CoalgeneReportWriter()

        load_dotenv()
        configure_logging()
        if _truthy(os.getenv("COALGENE_TRACE")):
            self._configure_telemetry()

        self.command_steps = {
            "rates": "Tabulate coagulation rates",
            "constants": "Evaluate closed-form constants",
            "simulate": "Simulate genealogies",
            "estimate-cn": "Estimate coalescence probability",
            "transition": "Estimate one-step transitions",
            "pd": "Analyse stick-breaking paths",
            "check": "Run diagnostic check",
            "plotdata": "Collect convergence data",
        }

    def _configure_telemetry(self) -> None:
        """Configure OpenTelemetry tracing with a console exporter on stderr."""
        global _telemetry_configured
        if _telemetry_configured:
            return
        try:
            from opentelemetry.sdk.trace import TracerProvider
            from opentelemetry.sdk.trace.export import BatchSpanProcessor, ConsoleSpanExporter
        except ImportError as e:
            raise RuntimeError("OpenTelemetry not configured") from e
        provider = TracerProvider()
        provider.add_span_processor(BatchSpanProcessor(ConsoleSpanExporter(out=sys.stderr)))
        trace.set_tracer_provider(provider)
        _telemetry_configured = True

    def _update_progress(self, step: str, progress: int, step_data: dict | None = None) -> None:
        if self.progress_callback:
            self.progress_callback(step, progress, step_data or {})

    def _add_output(self, source: str, content: str, output_type: str = "text") -> None:
        if self.output_callback:
            self.output_callback(source, content, output_type)

    def _handle_error(self, error: str) -> None:
        if self.error_callback:
            self.error_callback(error)
        else:
            logger.error("ERROR: %s", error)

    def run(self, config: RunConfig, threads: int | None = None) -> int:
        """
        Execute ``config`` and return the process exit code.

        0 on success or a pass verdict, 2 on fail, 3 on indeterminate and 1
        on any configuration, domain or I/O error.
        """
        env_threads = os.getenv("COALGENE_THREADS")
        try:
            workers = threads if threads is not None else (int(env_threads) if env_threads else None)
            configure_workers(workers)
            step = self.command_steps[config.command]
            self._update_progress(step, 0, {"command": config.command})
            logger.info("RUN: %s (%s)", step, config.command)
            with tracer.start_as_current_span(f"coalgene.{config.command}") as span:
                span.set_attribute("command", config.command)
                if config.check:
                    span.set_attribute("check", config.check)
                if config.run.seed is not None:
                    span.set_attribute("seed", str(config.run.seed))
                code = getattr(self, "_run_" + config.command.replace("-", "_"))(config)
            self._update_progress(step, 100, {"exit_code": code})
            return code
        except (ValueError, OSError, ArithmeticError) as e:
            self._handle_error(str(e))
            return EXIT_ERROR

    def _emit(self, text: str, config: RunConfig, kind: str) -> None:
        path = self.writer.emit(text, config.output.path)
        self._add_output(config.command, str(path) if path else text, kind)

    def _model(self, config: RunConfig) -> ModelSpec:
        if config.model is None:
            raise ConfigError("model", f"command {config.command!r} needs a model block")
        return to_model_spec(config.model)

    def _pd_params(self, config: RunConfig) -> PDParams:
        model = self._model(config)
        if isinstance(model, PDPowerModel):
            return model.params
        if isinstance(model, ExponentialModel):
            return model.params
        raise ConfigError("model.kind", f"command {config.command!r} needs a pd_power or exponential model")

    def _run_rates(self, config: RunConfig) -> int:
        measure = to_limit(config)
        if measure is None:
            raise ConfigError("limit", "the rates command needs a limit measure")
        n = config.run.n
        if not 2 <= n <= MAX_RATES_N:
            raise ConfigError("run.n", f"rates supports 2 <= n <= {MAX_RATES_N}, got {n}")
        if isinstance(measure, XiMeasure):
            header: tuple[str, ...] = ("pi_prime", "rate")
            rows = [(str(pi), coagulation_rate(measure, pi)) for pi in enumerate_partitions(n) if not pi.is_singletons]
        else:
            header = ("n_blocks", "b", "rate")
            rows = [(m, b, lambda_rate(measure, m, b)) for m in range(2, n + 1) for b in range(2, m + 1)]
        self._emit(self.writer.render_csv(header, rows), config, "csv")
        return EXIT_OK

    def _run_constants(self, config: RunConfig) -> int:
        model = self._model(config)
        p = self._pd_params(config)
        payload: dict[str, Any] = {"model": {"kind": model.kind, "alpha": p.alpha, "theta": p.theta, "gamma": p.gamma}}
        try:
            ell = ell_const(p) if -p.alpha < p.theta < p.alpha else None
        except ValueError:
            ell = None
        payload["constants"] = {
            "kappa": em_const(p.theta / p.alpha),
            "K": k_const(p),
            "ell": ell,
            "E_exp_gamma_S_inf": exp_gamma_s_infty(p),
        }
        if isinstance(model, ExponentialModel):
            em = em_theorem_constants(model.beta, model.kappa)
            payload["model"].update(beta=model.beta, kappa=model.kappa)
            payload["em_theorem"] = {"displayed": em.displayed, "specialized": em.specialized}
            payload["coincide"] = em.coincide
        self._emit(self.writer.render_json(payload), config, "json")
        return EXIT_OK

    def _run_simulate(self, config: RunConfig) -> int:
        run = config.run
        spec = SimulationSpec(
            model=self._model(config),
            N=run.population_size(),
            n=run.n,
            replicates=run.replicates,
            seed=run.seed,
            horizon=run.horizon,
            t_max=run.t_max,
        )
        trajectories = simulate(spec, thin=True)
        absorbed = sum(t.absorbed for t in trajectories)
        logger.info("RUN: %d of %d replicates absorbed", absorbed, len(trajectories))
        self._emit(self.writer.trajectories_csv(trajectories), config, "csv")
        return EXIT_OK

    def _run_estimate_cn(self, config: RunConfig) -> int:
        model, run = self._model(config), config.run
        estimates: list[tuple[str, EstimateWithError]] = []
        for N in run.population_sizes():
            cn = estimate_cn(model, N, run.replicates, run.seed)
            exact = exact_cn(model, N)
            if exact is not None:
                estimates.append((f"c_N exact N={N}", EstimateWithError.exact(exact, run.replicates)))
            estimates.append((f"c_N formula N={N}", cn.formula))
            estimates.append((f"c_N empirical N={N}", cn.empirical))
            if not model.is_awf:
                estimates.append((f"c_N frequency view N={N}", cn.awf_view))
            if abs(cn.zscore) >= 4.0:
                logger.warning("WARNING: formula and empirical c_N disagree at N=%d (z=%.2f)", N, cn.zscore)
        self._emit(self.writer.estimates_csv(estimates, run.seed), config, "csv")
        return EXIT_OK

    def _run_transition(self, config: RunConfig) -> int:
        model, run = self._model(config), config.run
        N = run.population_size()
        table = estimate_transition(model, N, run.n, run.replicates, run.seed, raw=run.raw)
        estimates = [(f"P(0_n -> {pi}) N={N}", est) for pi, est in table.items()]
        self._emit(self.writer.estimates_csv(estimates, run.seed), config, "csv")
        return EXIT_OK

    def _run_pd(self, config: RunConfig) -> int:
        run = config.run
        report = pd_summary(self._pd_params(config), run.population_size(), run.replicates, run.seed)
        return self._finish_report(report, config)

    def _run_check(self, config: RunConfig) -> int:
        return self._finish_report(self.run_check(config), config)

    def _run_plotdata(self, config: RunConfig) -> int:
        report = self.run_check(config)
        self._emit(self.writer.plotdata_csv(report), config, "csv")
        return EXIT_OK

    def _finish_report(self, report: CheckReport, config: RunConfig) -> int:
        logger.info("CHECK: %s", report)
        for note in report.notes:
            logger.warning("WARNING: %s", note)
        self._emit(self.writer.render_json(report), config, "json")
        return VERDICT_EXIT_CODES[report.verdict]

    def run_check(self, config: RunConfig) -> CheckReport:
        """Dispatch the configured diagnostic check and return its report."""
        name, run = config.check, config.run
        if name is None:
            raise ConfigError("check", "no check selected")
        seed, reps = run.seed, run.replicates
        tol = {"tolerance": run.tolerance} if run.tolerance is not None else {}
        logger.info("CHECK: starting %s", name)

        if name == "pd-theorem":
            return check_pd_theorem(self._pd_params(config), run.population_sizes(), reps, seed, b_max=run.b_max)
        if name in {"em-theorem", "em-equivalence"}:
            model = self._model(config)
            if not isinstance(model, ExponentialModel):
                raise ConfigError("model.kind", f"check {name} needs an exponential model")
            if name == "em-theorem":
                return check_em_theorem(model.beta, model.kappa, run.population_sizes(), reps, seed, b_max=run.b_max)
            N = run.population_size()
            return check_em_equivalence(model.beta, model.kappa, N, model.truncation(N), reps, seed, shift=run.shift)

        model = self._model(config)
        if name == "semigroup":
            limit = self._require_limit(config)
            return check_semigroup(model, limit, run.population_size(), run.n, run.times, reps, seed, **tol)
        if name == "lambda-criterion":
            limit = self._require_limit(config)
            if not isinstance(limit, (KingmanMeasure, PointMassMeasure, BetaMeasure)):
                raise ConfigError("limit", "the lambda criterion needs a Lambda measure (kingman, point or beta)")
            return check_lambda_criterion(model, limit, run.population_sizes(), run.b_max, reps, seed, **tol)
        if name == "kingman-criterion":
            return check_kingman_criterion(model, run.population_sizes(), run.beta_exponent, reps, seed)
        if name == "xi-functionals":
            shapes = [tuple(shape) for shape in run.shapes]
            return check_xi_functionals(model, run.population_sizes(), shapes, reps, seed, limit=to_limit(config), **tol)
        if name == "replacement":
            return check_replacement_equivalence(model, run.population_sizes(), run.n, reps, seed, **tol)
        if name == "bottleneck":
            if not isinstance(model, BottleneckModel):
                raise ConfigError("model.kind", "the bottleneck check needs a bottleneck model")
            if run.regime is None:
                raise ConfigError("run.regime", "choose regime i, ii or iii")
            return check_bottleneck_regimes(model, run.regime, run.population_sizes(), run.n, reps, seed, **tol)
        return check_discrete_limit(model, to_rho(config), run.population_size(), run.n, reps, seed, atol=run.atol)

    def _require_limit(self, config: RunConfig):
        limit = to_limit(config)
        if limit is None:
            raise ConfigError("limit", f"check {config.check} needs a limit measure")
        return limit
