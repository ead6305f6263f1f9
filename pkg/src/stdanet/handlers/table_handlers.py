import pandas as pd
import streamlit as st

from stdanet.config import MESSAGES
from stdanet.evaluate import AGGREGATE


def handle_eval_table(frame: pd.DataFrame):
    sequences = frame[frame["sequence"] != AGGREGATE]
    st.write(MESSAGES["EVAL_SUMMARY"].format(count=len(sequences)))
    st.dataframe(frame)
    if len(sequences):
        st.bar_chart(sequences.set_index("sequence")[["psnr", "baseline_psnr"]])
