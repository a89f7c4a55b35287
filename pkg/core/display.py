import logging
import time

import config

logger = logging.getLogger(__name__)


class RunDisplay:
    """Throttled progress reporting for a running integration.

    The integrator pushes status updates ("step", "sample", "done"); the
    display turns them into log lines at most once per render_interval.
    """

    def __init__(self, label: str, render_interval: float = config.RENDER_INTERVAL):
        self.label = label
        self.samples = []
        self.current = {}
        self.last_render_time = float("-inf")
        self.render_interval = render_interval
        self.renders = 0

    def update(self, state_update: dict):
        status = state_update.get("status")
        should_render = False

        if status == "step":
            self.current = state_update

        elif status == "sample":
            self.current = state_update
            row = state_update.get("row")
            if row is not None:
                self.samples.append(row)
            should_render = True

        elif status == "done":
            self.current = state_update
            self._try_render(force=True)
            return

        if should_render:
            self._try_render()

    def _try_render(self, force: bool = False):
        now = time.monotonic()
        if not force and (now - self.last_render_time < self.render_interval):
            return
        logger.info(self._build_text())
        self.renders += 1
        self.last_render_time = now

    def _build_text(self) -> str:
        step = self.current.get("step", 0)
        n_steps = self.current.get("n_steps", 0)
        t = self.current.get("t", 0.0)
        text = f"{self.label}: step {step}/{n_steps}, t={t:.4g}"
        if self.samples:
            last = self.samples[-1]
            text += f", mass={last['m_total']:.12g}, gap_l2={last['gap_l2']:.3e}"
        if self.current.get("status") == "done":
            text += f" (done, {len(self.samples)} samples)"
        return text
