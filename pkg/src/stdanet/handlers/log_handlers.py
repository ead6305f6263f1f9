import pandas as pd
import streamlit as st

from stdanet.config import MESSAGES

LOSS_COLUMNS = ["mse", "warp", "total"]


def handle_metric_log(frame: pd.DataFrame):
    last = frame["total"].iloc[-1] if len(frame) else float("nan")
    st.write(MESSAGES["LOG_SUMMARY"].format(rows=len(frame), last=last))
    st.dataframe(frame)
    if len(frame):
        st.markdown(MESSAGES["CHART"])
        st.line_chart(frame.set_index("step")[LOSS_COLUMNS])
        st.line_chart(frame.set_index("step")[["psnr"]])
