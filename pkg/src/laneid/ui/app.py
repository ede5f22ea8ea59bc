import streamlit as st
from pathlib import Path
import sys

import numpy as np
import pandas as pd

# Add parent directory to path for imports
sys.path.insert(0, str(Path(__file__).resolve().parents[3]))

from laneid.brightness import BrightnessConfig, adjust_stream, perceived_brightness
from laneid.checkpoint import load_model
from laneid.config import get_config_manager
from laneid.dataset import load_sequence, read_manifest
from laneid.decision import DecisionConfig, DecisionCriterion, decide_stream
from laneid.errors import LaneIdError
from laneid.evaluate import ModelPredictor
from laneid.logger import get_user_friendly_error
from laneid.paths import CHECKPOINTS, CORPORA


# ============================================================================
# PAGE CONFIGURATION
# ============================================================================

st.set_page_config(
    page_title="Lane ID Viewer",
    page_icon="🛣️",
    layout="wide",
)


# ============================================================================
# SESSION STATE INITIALIZATION
# ============================================================================

config = get_config_manager().config

if "frame" not in st.session_state:
    st.session_state.frame = 0
if "threshold" not in st.session_state:
    st.session_state.threshold = config.brightness.threshold or 130.0
if "criterion" not in st.session_state:
    st.session_state.criterion = config.decision.criterion


# ============================================================================
# HELPER FUNCTIONS
# ============================================================================

@st.cache_resource
def cached_model(path: str):
    return load_model(Path(path))


@st.cache_data
def cached_sequence(path: str):
    return load_sequence(Path(path))


def list_corpora():
    return sorted(p.parent for p in CORPORA.glob("*/manifest.json"))


def probability_chart(left, right, count):
    frame = pd.DataFrame(
        {"left": left, "right": right, "count": count},
        index=[str(i) for i in range(1, len(left) + 1)],
    )
    st.bar_chart(frame)


# ============================================================================
# SIDEBAR
# ============================================================================

with st.sidebar:
    st.markdown("## 🛣️ Lane ID Viewer")
    corpora = list_corpora()
    if not corpora:
        st.info(f"No corpora under {CORPORA}. Generate one with `python -m laneid gen`.")
        st.stop()
    corpus = st.selectbox("Corpus", corpora, format_func=lambda p: p.name)
    manifest = read_manifest(corpus)
    sequence_name = st.selectbox("Sequence", manifest["sequences"])

    st.markdown("### Brightness")
    use_brightness = st.toggle("Adjust dark frames", value=config.brightness.enabled)
    st.session_state.threshold = st.slider("Threshold B", 0.0, 255.0, float(st.session_state.threshold), 5.0)

    st.markdown("### Model")
    checkpoints = sorted(CHECKPOINTS.glob("*.ckpt"))
    checkpoint = st.selectbox("Checkpoint", [None] + checkpoints, format_func=lambda p: "none" if p is None else p.name)
    criteria = [c.value for c in DecisionCriterion]
    st.session_state.criterion = st.selectbox(
        "Decision criterion", criteria, index=criteria.index(st.session_state.criterion)
    )


# ============================================================================
# MAIN VIEW
# ============================================================================

try:
    record = cached_sequence(str(corpus / sequence_name))
except LaneIdError as e:
    st.error(get_user_friendly_error(e))
    st.stop()

brightness = BrightnessConfig(
    enabled=use_brightness,
    threshold=st.session_state.threshold,
    measure=config.brightness.measure,
    window=config.brightness.window,
)
adjusted, fired = adjust_stream(record.frames, brightness)

st.session_state.frame = min(st.session_state.frame, len(record) - 1)
t = st.slider("Frame", 0, len(record) - 1, st.session_state.frame)
st.session_state.frame = t
label = record.labels[t]

col1, col2 = st.columns(2)
with col1:
    st.markdown("#### Original")
    st.image(record.frames[t], use_column_width=True)
    st.caption(f"perceived brightness {perceived_brightness(record.frames[t]):.1f}")
with col2:
    st.markdown("#### Network input")
    st.image(adjusted[t], use_column_width=True)
    st.caption("adjusted" if fired[t] else "unchanged")

st.markdown(
    f"**Label**: left ID {label.delta_l} · right ID {label.delta_r} · {label.lane_count} lanes"
)

if checkpoint is not None:
    try:
        model = cached_model(str(checkpoint))
        probs = ModelPredictor(model).predict_sequence(record, adjusted)
    except (LaneIdError, OSError) as e:
        st.error(get_user_friendly_error(e))
        st.stop()

    decision = DecisionConfig(
        criterion=st.session_state.criterion,
        entropy_sign=config.decision.entropy_sign,
        temporal_penalty=config.decision.temporal_penalty,
    )
    estimates = decide_stream(probs, decision)
    estimate = estimates[t]
    st.markdown(
        f"**Decision**: {estimate.convention.value} ID {estimate.lane_id} of {estimate.lane_count} lanes "
        f"(score left {estimate.score_left:.3f}, right {estimate.score_right:.3f})"
    )
    probability_chart(*probs[t])

    truth = np.array([label.id_for(e.convention) == e.lane_id for label, e in zip(record.labels, estimates)])
    st.metric("Final accuracy on this sequence", f"{truth.mean():.2%}")
