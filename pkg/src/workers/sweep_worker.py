import logging
from typing import Any, Dict, List, Sequence, Union

import numpy as np
from celery import Celery

from ..exceptions import CapfluxError, SimulationAborted
from ..models.scenario import ScenarioConfig
from ..modules.analysis import RecoverySeries
from ..modules.reporting import write_run_outputs
from ..modules.scenarios import aborted_result, parse_config, run_scenario
from ..settings import settings

# Initialize Celery app
celery_app = Celery(
    "sweep_worker",
    broker=settings.CELERY_BROKER_URL,
    backend=settings.CELERY_RESULT_BACKEND,
)

# Configure Celery
celery_app.conf.update(
    task_serializer="json",
    accept_content=["json"],
    result_serializer="json",
    timezone="UTC",
    enable_utc=True,
    task_always_eager=settings.CELERY_TASK_ALWAYS_EAGER,
    worker_concurrency=settings.SWEEP_MAX_WORKERS,
    task_routes={
        "sweep_worker.run_member_task": {"queue": "sweep_members"},
    },
)

logger = logging.getLogger(__name__)


@celery_app.task(bind=True, name="sweep_worker.run_member_task")
def run_member_task(self, config_data: Dict[str, Any]) -> Dict[str, Any]:
    """
    Run one sweep member and return its recovery curve.

    Args:
        config_data: ScenarioConfig dumped in JSON mode

    Returns:
        {"name", "status", "error", "t_d", "recovery_pct"}; failed members
        carry the error message and empty curves.
    """
    config = parse_config(config_data, source=f"sweep task {self.request.id}")
    name = config.scenario.name
    outcome: Dict[str, Any] = {"name": name, "status": "completed", "error": "", "t_d": [], "recovery_pct": []}
    try:
        result = run_scenario(config)
    except SimulationAborted as e:
        logger.error(f"Sweep member {name} aborted: {e}")
        if config.output.directory and e.record is not None:
            write_run_outputs(aborted_result(config, e.record), config.output.directory, config.output.gnuplot)
        outcome.update(status="aborted", error=str(e))
        return outcome
    except CapfluxError as e:
        logger.error(f"Sweep member {name} failed: {e}")
        outcome.update(status="failed", error=str(e))
        return outcome

    if config.output.directory:
        write_run_outputs(result, config.output.directory, config.output.gnuplot)
    if result.recovery is None:
        outcome.update(status="failed", error="steady state not reached")
        return outcome
    outcome["t_d"] = result.recovery.t_d.tolist()
    outcome["recovery_pct"] = result.recovery.recovery_pct.tolist()
    logger.info(f"Sweep member {name} finished in {result.wall_time_s:.1f} s")
    return outcome


def run_members_with_celery(configs: Sequence[ScenarioConfig]) -> List[Union[RecoverySeries, str]]:
    """Dispatch every member as a task, then collect results in submission order."""
    pending = [run_member_task.delay(config.model_dump(mode="json")) for config in configs]
    results: List[Union[RecoverySeries, str]] = []
    for config, handle in zip(configs, pending):
        try:
            outcome = handle.get()
        except Exception as e:
            logger.error(f"Sweep task for {config.scenario.name} raised: {e}")
            results.append(str(e))
            continue
        if outcome["status"] != "completed":
            results.append(outcome["error"])
            continue
        results.append(RecoverySeries(np.asarray(outcome["t_d"]), np.asarray(outcome["recovery_pct"])))
    return results
