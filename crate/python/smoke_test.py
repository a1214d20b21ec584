"""Smoke test for the reobench Python module.

Build first:  pip install --no-build-isolation -e crates/python
Then run:     python python/smoke_test.py
"""

import math
import tempfile
from pathlib import Path

import numpy as np

import reobench


def check(cond, msg):
    if not cond:
        raise SystemExit(f"FAIL: {msg}")
    print(f"ok: {msg}")


def main():
    check(len(reobench.corruption_names()) == 12, "twelve corruption kinds")
    check(reobench.severity_params("gaussian_noise", 5) == {"sigma": 0.08}, "severity table lookup")
    try:
        reobench.severity_params("rotate", 6)
    except ValueError as e:
        check("severity" in str(e), "out-of-range severity raises ValueError")
    else:
        check(False, "out-of-range severity raises ValueError")

    rng = np.random.default_rng(0)
    arr = rng.integers(0, 256, size=(64, 64, 3), dtype=np.uint8)
    img = reobench.Raster.from_bytes(arr.tobytes(), 64, 64, 3)
    check((img.width, img.height, img.channels) == (64, 64, 3), "raster from numpy bytes")

    same, _, _ = img.corrupt("brightness_contrast", 1)
    check(same.to_bytes() == arr.tobytes(), "brightness S1 is an identity")

    a, params, _ = img.corrupt("translate", 3, seed=1, image_id="tile")
    b, _, _ = img.corrupt("translate", 3, seed=1, image_id="tile")
    check(a.to_bytes() == b.to_bytes(), "seeded corruption is reproducible")
    check(abs(params["dx"]) <= 25 and abs(params["dy"]) <= 25, "drawn offsets are reported")

    box = [[10.0, 20.0], [20.0, 20.0], [20.0, 30.0], [10.0, 30.0]]
    rot, _, boxes = img.corrupt("rotate", 5, boxes=[box])
    out = np.frombuffer(rot.to_bytes(), dtype=np.uint8).reshape(64, 64, 3)
    check(np.array_equal(out, np.rot90(arr, k=-1)), "90 degree rotation is a pixel permutation")
    check(boxes[0][0] == [44.0, 10.0], "box corners follow the rotation")

    chained, steps, _ = img.corrupt_chain("brightness:3,cloud:3,compression:3", seed=7)
    check(len(steps) == 3 and "field_seed" in steps[1]["params"], "chain reports every step")

    check(math.isclose(reobench.polygon_iou(box, box), 1.0), "identical quads have IoU 1")
    avg, rtp = reobench.r_tp(90.0, {"haze": 80.0, "cloud": 70.0})
    check(math.isclose(avg, 75.0) and math.isclose(rtp, 100 * 15 / 90), "r_tp")
    check(round(reobench.miou([([0, 1, 1, 1], [0, 0, 1, 1])], 2, 2, 2), 2) == 58.33, "mIoU fixture")
    gt = {"a": [(box, "ship")]}
    check(reobench.mean_ap([("a", box, "ship", 0.9)], gt) == 100.0, "mAP of a perfect detection")

    x = rng.normal(size=(200, 4)).tolist()
    check(reobench.frechet(x, x) < 1e-9, "Frechet distance of a set to itself")

    with tempfile.TemporaryDirectory() as tmp:
        root = Path(tmp)
        for name in ("forest", "river"):
            (root / "data" / name).mkdir(parents=True)
            reobench.Raster.from_bytes(arr.tobytes(), 64, 64, 3).save(str(root / "data" / name / "0.png"))
        report = reobench.generate(str(root / "data"), str(root / "out"), kinds=["haze", "scale"], severities=(1, 2))
        check(report["written"] == 8 and report["failed"] == 0, "dataset generation")
        check((root / "out" / "scale" / "2" / "river" / "0.png").is_file(), "output layout")

    print("all checks passed")


if __name__ == "__main__":
    main()
