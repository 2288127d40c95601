"""Smoke test for the `bruvs` extension module.

Build and install first:  cd crates/py && maturin build --release -o dist && pip install dist/bruvs-*.whl
Run:                      python python/smoke_test.py
"""
import math
import pathlib
import tempfile

import bruvs

REPO = pathlib.Path(__file__).resolve().parents[1]

a = bruvs.BBox(0.1, 0.1, 0.3, 0.3)
b = bruvs.BBox(0.2, 0.1, 0.4, 0.3)
assert math.isclose(bruvs.iou(a, b), 1 / 3)
assert a.iou(a) == 1.0
try:
    bruvs.BBox(0.3, 0.1, 0.1, 0.2)
    raise AssertionError("inverted box accepted")
except ValueError:
    pass

# one fish swimming right, one static blob of clutter
sched = bruvs.Schedule("v", 10_000, 1280, 720, fps=3.0)
assert len(sched) == 30 and sched.frames[1] == (1, 333)
frames = []
for i in range(len(sched)):
    x = 0.1 + 0.02 * i
    frames.append([(x, 0.4, x + 0.1, 0.5, 0.9), (0.9, 0.05, 0.95, 0.1, 0.62)])
cfg = bruvs.Config(keep_conf=0.7)
tracks = bruvs.track(sched, frames, cfg)
assert len(tracks) == 2, tracks
kept, removed = bruvs.post_filter(tracks, cfg)
assert len(kept) == 1 and len(removed) == 1
assert removed[0].max_displacement < 1e-9

kept[0].label = "carcharhinus_perezi"
rows = bruvs.ssmaxn(kept, sched)
assert rows == [("v", "carcharhinus_perezi", 1, 0, 0)], rows
kept[0].rejected = True
assert bruvs.ssmaxn(kept, sched) == []

assert bruvs.precision_recall_f1(2, 2, 0) == (0.5, 1.0, 2 / 3)
assert math.isclose(bruvs.average_precision([True, False, True], 2), 5 / 6)
mean, sd, per_video = bruvs.maxn_accuracy({"v1": [("a", 2, 2), ("b", 1, 2)], "v2": [("a", 1, 1)]})
assert mean == 0.75 and per_video == {"v1": 0.5, "v2": 1.0}
box = (0.1, 0.1, 0.2, 0.2)
summary = bruvs.mota([([(1, box)], [(7, box)]), ([(1, box)], [])])
assert summary["mota"] == 0.5 and summary["fn"] == 1

w, h = 8, 4
pixels = bytearray([40] * (w * h * 3))
pixels[(1 * w + 2) * 3:(1 * w + 2) * 3 + 3] = b"\xff\xff\xff"
assert bruvs.bright_components(w, h, bytes(pixels)) == [(1, 2, 1, 2)]
out = bruvs.inpaint(w, h, bytes(pixels))
assert bytes(out[(1 * w + 2) * 3:(1 * w + 2) * 3 + 3]) == b"\x00\x00\x00"

with tempfile.TemporaryDirectory() as tmp:
    run = pathlib.Path(tmp) / "run"
    videos = bruvs.analyze_scenario(str(REPO / "scenarios" / "two_species.toml"), str(run))
    assert videos == ["reef01"]
    report = bruvs.finalize(str(run))
    assert report.startswith("video_id,species,maxn,frame_index_at_max,time_ms_at_max\nreef01,unclassified,")
    assert (run / "maxn.csv").read_text() == report

print("bruvs smoke test ok")
