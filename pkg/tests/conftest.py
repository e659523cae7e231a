import numpy as np
import pytest

from mctrack import affinity
from mctrack.geometry import look_at_camera
from mctrack.simulator import SimConfig, simulate_scene


def random_rotation(rng) -> np.ndarray:
    """Uniform-ish rotation via QR of a Gaussian matrix, det +1."""
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q @ np.diag(np.sign(np.diag(r)))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def random_camera(rng, cam_id=0):
    """Well-conditioned camera a few meters above ground looking at a
    point on the plane."""
    position = np.array([rng.uniform(-10, 10), rng.uniform(-10, 10),
                         rng.uniform(3.0, 10.0)])
    target = np.array([rng.uniform(-3, 3), rng.uniform(-3, 3), 0.0])
    fx = rng.uniform(500, 1500)
    fy = rng.uniform(500, 1500)
    return look_at_camera(cam_id, position, target, fx, fy,
                          rng.uniform(300, 700), rng.uniform(300, 700))


@pytest.fixture(scope="session")
def small_scene():
    """Noiseless 4-pedestrian scene used by several modules."""
    return simulate_scene(SimConfig(n_pedestrians=4, n_cameras=3,
                                    n_frames=30, seed=101))


@pytest.fixture(scope="session")
def small_feats(small_scene):
    return affinity.SceneFeatures(small_scene)


@pytest.fixture(scope="session")
def noisy_scene():
    return simulate_scene(SimConfig(n_pedestrians=5, n_cameras=3, n_frames=40,
                                    seed=77, foot_sigma=0.03,
                                    box_pixel_sigma=1.0, miss_rate=0.05,
                                    embedding_sigma=0.05))


@pytest.fixture(scope="session")
def fitted_weights():
    """Temporal/spatial/split combiners fitted once on training scenes.

    The split combiner pools several corruption passes over scenes with
    different camera counts; a single pass yields far too few negative
    (switch) samples for a stable decision boundary.
    """
    from mctrack.pipeline import split_features_csv_lines
    from mctrack.simulator import corrupt_tracklets, ground_truth_tracklets
    from mctrack.tracklets import sample_spatial_pairs, sample_temporal_pairs

    scene = simulate_scene(SimConfig(
        n_pedestrians=8, n_cameras=4, n_frames=60, seed=11, foot_sigma=0.03,
        box_pixel_sigma=1.0, miss_rate=0.05, embedding_sigma=0.05))
    feats = affinity.SceneFeatures(scene)
    tracklets = ground_truth_tracklets(scene)
    identity = {t.id: scene.identity_of[t.det_ids[0]] for t in tracklets}

    def featurize(samples):
        pos, neg = [], []
        for s in samples:
            x, y = s.x, s.y
            if s.kind == "temporal":
                if scene.by_id[x.det_ids[0]].time > scene.by_id[y.det_ids[0]].time:
                    x, y = y, x
                f = affinity.temporal_features(x, y, feats)
            else:
                f = affinity.spatial_features(x, y, feats)
            (pos if s.label == 1 else neg).append(f)
        return pos, neg

    pos_t, neg_t = sample_temporal_pairs(tracklets, identity, scene, 6, seed=1)
    pos_s, neg_s = sample_spatial_pairs(tracklets, identity, scene, 2, seed=2)
    pt, _ = featurize(pos_t)
    _, nt = featurize(neg_t)
    ps, _ = featurize(pos_s)
    _, ns = featurize(neg_s)

    split_cfgs = [
        SimConfig(n_pedestrians=8, n_cameras=4, n_frames=60, seed=11,
                  foot_sigma=0.03, box_pixel_sigma=1.0, miss_rate=0.05,
                  embedding_sigma=0.05),
        SimConfig(n_pedestrians=7, n_cameras=3, n_frames=60, seed=12,
                  foot_sigma=0.03, box_pixel_sigma=1.0, miss_rate=0.05,
                  embedding_sigma=0.05),
        SimConfig(n_pedestrians=9, n_cameras=4, n_frames=60, seed=13,
                  foot_sigma=0.03, box_pixel_sigma=1.0, miss_rate=0.05,
                  embedding_sigma=0.05),
    ]
    pos_split, neg_split = [], []
    for cfg in split_cfgs:
        train = scene if cfg.seed == 11 else simulate_scene(cfg)
        train_feats = feats if cfg.seed == 11 else affinity.SceneFeatures(train)
        gt = ground_truth_tracklets(train)
        for cseed in (1, 2, 3):
            corrupted, _ = corrupt_tracklets(gt, train.identity_of, train,
                                             rate=0.5, seed=cfg.seed * 100 + cseed)
            lines = split_features_csv_lines(corrupted, train_feats,
                                             train.identity_of)
            names = lines[0].strip().split(",")[2:]
            for line in lines[1:]:
                parts = line.strip().split(",")
                f = {n: float(v) for n, v in zip(names, parts[2:])}
                (pos_split if parts[1] == "1" else neg_split).append(f)

    return {"temporal": affinity.fit_combiner(pt, nt, "temporal"),
            "spatial": affinity.fit_combiner(ps, ns, "spatial"),
            "split": affinity.fit_combiner(pos_split, neg_split, "split")}
