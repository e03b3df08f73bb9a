"""Smoke test for the curio extension module.

Build and run from the repository root:

    cargo build -p curio-py --release
    cp target/release/libcurio.so python/curio.so
    python3 python/smoke_test.py
"""

import math
import os
import sys
import tempfile

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import curio  # noqa: E402


def main():
    world = curio.World.generate(seed=1, grid_w=12, grid_h=12, img_w=8, img_h=8)
    assert (world.grid_w, world.grid_h, world.img_w, world.img_h) == (12, 12, 8, 8)
    pixels = world.image(3, 4)
    assert len(pixels) == 64 and all(0.0 <= p <= 1.0 for p in pixels)
    x, y = world.cell_position(3, 4)
    assert world.snap_to_grid(x, y) == (3, 4)
    path = world.interpolate((0.0, 0.0), (1.0, 0.0), 50.0)
    assert path[0] == (0.0, 0.0) and path[-1] == (1.0, 0.0)

    ae, report = curio.Autoencoder.pretrain(world, latent=4, epochs=5, seed=1)
    assert ae.latent_dim == 4
    assert report["train_mse"] < report["untrained_train_mse"]
    code = ae.encode(pixels)
    assert len(code) == 4 and len(ae.decode(code)) == 64

    with tempfile.TemporaryDirectory() as tmp:
        world.save(os.path.join(tmp, "world.bin"))
        again = curio.World.load(os.path.join(tmp, "world.bin"))
        assert again.image(3, 4) == pixels
        ae.save(os.path.join(tmp, "encoder"))
        assert curio.Autoencoder.load(os.path.join(tmp, "encoder")).encode(pixels) == code

    mem = curio.EpisodicMemory(2, batch_len=4, seed=3)
    for i in range(8):
        assert mem.insert(i, (0.5, 0.5), [float(i)], 0.1) == ([], False)
    replaced, forced = mem.insert(8, (0.5, 0.5), [8.0], 0.0)
    assert len(replaced) == 1 and forced
    assert len(mem) == mem.capacity == 8
    assert 8 in mem.ids() and mem.diversity() == 1.0

    assert curio.compute_pe([0.0, 0.0], [3.0, 4.0]) == 5.0
    assert abs(curio.learning_progress(0.2, 0.5) - math.tanh(0.3)) < 1e-15
    assert 0.0 <= curio.learning_progress(0.0, 100.0) < 1.0

    hull, area = curio.convex_hull([(0, 0), (1, 0), (1, 1), (0, 1), (0.5, 0.5)])
    assert hull == [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)] and area == 1.0

    fwd, inv = curio.gradcheck(4)
    assert fwd < 1e-4 and inv < 1e-4

    config = {
        "world.grid_w": 12,
        "world.grid_h": 12,
        "world.img_w": 8,
        "world.img_h": 8,
        "encoder.latent": 4,
        "encoder.epochs": 2,
        "loop.iterations": 100,
        "loop.n_goals": 3,
        "loop.testset_size": 10,
        "memory.batches": 2,
    }
    with tempfile.TemporaryDirectory() as tmp:
        run = curio.run_session(config, out=tmp)
        assert os.path.exists(os.path.join(tmp, "mse.csv"))
    assert [row[0] for row in run["mse"]] == [50, 100]
    assert len(run["explored"]) == 100
    assert run["fits"] == 100 // 16
    assert curio.run_session(config)["mse"] == run["mse"]

    print("smoke test passed")


if __name__ == "__main__":
    main()
