# %% [markdown]
# # A walk through the detector, one layer at a time
#
# We render a short synthetic clip (a small dark square sliding left over a
# textured background that also slides left) and look at what each stage of
# the model does to it.  Everything is plain numpy; nothing is plotted, we
# just print a few numbers per layer.

# %%
import numpy as np

from smalltarget import Detector, ModelConfig, generate
from smalltarget.evalkit import extract_detections
from smalltarget.synthgen import initial_video_spec

spec = initial_video_spec(width=120, height=90, duration=220, target_start_position=(110.0, 45.0))
frames, truth = generate(spec)
print(frames.shape, "frames;", len(truth), "truth rows")

# %% [markdown]
# Time-delay feedback needs no velocity estimate, so it runs without a
# tuning table.  `keep_layers=True` hands back every intermediate map.

# %%
det = Detector(frames.shape[1:], ModelConfig().with_mode("time-delay"))
print("warm-up frames:", det.warmup_frames)
for i, frame in enumerate(frames):
    res = det.step(frame, keep_layers=True)

for name, layer in res.layers.items():
    print(f"{name:>4s}  min {layer.min():10.4f}  max {layer.max():10.4f}")

# %% [markdown]
# The last frame's output `Q` should peak near the target.  The response
# trails the true position slightly because the delay filters look back
# in time.

# %%
x_true, y_true = truth[-1][2], truth[-1][3]
dets = extract_detections(res.Q, 0.1 * res.Q.max())
x, y, score = dets[0]
print(f"target at ({x_true:.1f}, {y_true:.1f}); strongest peak at ({x}, {y}), score {score:.4g}")
print("peaks above 10% of max:", len(dets))

# %% [markdown]
# A static scene gives no response at all once the filters have warmed up:
# every band-pass stage rejects a constant input.

# %%
still = np.repeat(frames[:1], 200, axis=0)
det = Detector(still.shape[1:], ModelConfig().with_mode("none"))
peak = max(np.abs(det.step(f).Q).max() for f in still[det.warmup_frames:])
print("max |Q| on a still image:", peak)
