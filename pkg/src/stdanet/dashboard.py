from pathlib import Path
from typing import Optional

import pandas as pd
import streamlit as st

from stdanet.config import CONFIG, MESSAGES, UI
from stdanet.handlers import handle_eval_table, handle_heatmaps, handle_metric_log, handle_missing
from stdanet.train import read_metric_log


class RunDashboardApp:
    """Streamlit viewer for a run directory: metric log, evaluation table and attention heatmaps."""

    @staticmethod
    def setup_page() -> None:
        st.set_page_config(layout=UI["layout"], page_title=UI["title"], page_icon=UI["icon"])
        st.title(f"{UI['title']} {CONFIG['version']}")

    @staticmethod
    def select_run_dir() -> Optional[Path]:
        value = st.text_input(MESSAGES["RUN_DIR_PROMPT"])
        return Path(value) if value else None

    @staticmethod
    def display_metric_log(run_dir: Path) -> None:
        path = run_dir / CONFIG["metric_log_name"]
        if not path.is_file():
            handle_missing("NO_LOG")
            return
        handle_metric_log(read_metric_log(path))

    @staticmethod
    def display_eval_table(run_dir: Path) -> None:
        path = run_dir / CONFIG["eval_table_name"]
        if not path.is_file():
            handle_missing("NO_EVAL")
            return
        handle_eval_table(pd.read_csv(path))

    @staticmethod
    def display_heatmaps(run_dir: Path) -> None:
        heat_dir = run_dir / CONFIG["heatmap_dir_name"]
        paths = sorted(heat_dir.glob("*.png")) if heat_dir.is_dir() else []
        if not paths:
            handle_missing("NO_HEATMAPS")
            return
        handle_heatmaps(paths)

    def run(self) -> None:
        """
        Renders the page: the three panels of the selected directory, each one falling back to an
        info message when its artifact is missing.
        """
        self.setup_page()
        run_dir = self.select_run_dir()
        if run_dir is None:
            return
        try:
            log_tab, eval_tab, heat_tab = st.tabs(["Metrics", "Evaluation", "Attention"])
            with log_tab:
                self.display_metric_log(run_dir)
            with eval_tab:
                self.display_eval_table(run_dir)
            with heat_tab:
                self.display_heatmaps(run_dir)
        except Exception as ex:
            st.error(f"Cannot read {run_dir}: {ex}")
            if CONFIG["DEBUG_MODE"]:
                st.exception(ex)


if __name__ == "__main__":
    if CONFIG["DEBUG_MODE"]:
        import sentry_sdk

        sentry_sdk.init(dsn=CONFIG["SENTRY_DSN"] or None, traces_sample_rate=1.0)

    app = RunDashboardApp()
    app.run()
