from pathlib import Path

import streamlit as st

from stdanet.config import MESSAGES, UI
from stdanet.imageio import load_image


def handle_missing(key: str):
    st.info(MESSAGES[key])


def handle_heatmaps(paths: list[Path], frames: int = 3):
    """Shows ``%05d_t{0,1,2}.png`` heatmaps one row per restored frame."""
    rows: dict[str, list[Path]] = {}
    for path in sorted(paths):
        rows.setdefault(path.stem.rsplit("_t", 1)[0], []).append(path)
    for name, row in rows.items():
        columns = st.columns(frames)
        for column, path in zip(columns, row):
            column.image(load_image(path)[0], caption=f"{name} {path.stem.rsplit('_', 1)[-1]}", width=UI["heatmap_width"], clamp=True)
