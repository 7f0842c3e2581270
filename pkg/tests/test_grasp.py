import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial import ConvexHull
from scipy.spatial.transform import Rotation

from hocontact import _accel
from hocontact.errors import GeometryError, InputError
from hocontact.fixtures import cage_grasp
from hocontact.grasp import (
    Contact,
    WrenchSet,
    count_phalanges,
    epsilon_metric,
    extract_contacts,
    grasp_score,
    hull_membership,
    volume_metric,
    wrench_primitives,
)
from hocontact.losses import HandAnnotation
from hocontact.mesh import TriMesh, sphere

CROSS = np.vstack([np.eye(6), -np.eye(6)])
CROSS_VOLUME = 2**6 / 720


# ----------------------------------------------------------------- oracles


def dense_epsilon(w, n=10**6, seed=7, chunk=100_000):
    """Minimum support value over ``n`` i.i.d. Gaussian-normalised directions (an upper bound)."""
    r = np.random.default_rng(seed)
    best = np.inf
    for _ in range(n // chunk):
        u = r.normal(size=(chunk, 6))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        best = min(best, float((u @ w.T).max(axis=1).min()))
    return best


def exact_epsilon(w):
    """Distance from the origin to the nearest hull facet (0 if the origin is not interior)."""
    eq = ConvexHull(w).equations
    return max(0.0, float((-eq[:, -1]).min()))


def point_contacts(points):
    """Contacts on the unit sphere with inward normals."""
    points = np.asarray(points, dtype=np.float64)
    points = points / np.linalg.norm(points, axis=1, keepdims=True)
    return [Contact(p, -p, i) for i, p in enumerate(points)]


def fingertip(center, radius=0.15, k=3):
    """``k`` points on the unit sphere around ``center``: a finger pad."""
    c = np.asarray(center, dtype=np.float64)
    c = c / np.linalg.norm(c)
    t1 = np.cross(c, [0.0, 0.0, 1.0]) if abs(c[2]) < 0.9 else np.cross(c, [1.0, 0.0, 0.0])
    t1 /= np.linalg.norm(t1)
    t2 = np.cross(c, t1)
    a = 2 * np.pi * np.arange(k) / k
    return c + radius * (np.cos(a)[:, None] * t1 + np.sin(a)[:, None] * t2)


def random_closure_fixtures(n=5, seed=0):
    r = np.random.default_rng(seed)
    out = []
    while len(out) < n:
        p = r.normal(size=(4, 3))
        ws = wrench_primitives(point_contacts(p), 1.0, 8)
        if exact_epsilon(ws.primitives) > 0.01:
            out.append(ws)
    return out


RANDOM4 = random_closure_fixtures()


# --------------------------------------------------------------- wrenches


class TestWrenchPrimitives:
    def test_one_contact_cone(self):
        ws = wrench_primitives(point_contacts([[1, 0, 0]]), mu=1.0, cone_edges=8)
        assert len(ws) == 8
        f = ws.primitives[:, :3]
        np.testing.assert_allclose(f @ [-1, 0, 0], np.cos(np.arctan(1.0)), atol=1e-15)
        np.testing.assert_allclose(np.linalg.norm(f, axis=1), 1.0, atol=1e-15)

    def test_cone_closes(self):
        ws = wrench_primitives(point_contacts([[0, 1, 0]]), mu=1e-9)
        np.testing.assert_allclose(ws.primitives[:, :3], [[0, -1, 0]] * 8, atol=1e-6)

    @settings(max_examples=50)
    @given(st.floats(0.01, 3.0), st.integers(3, 16), st.floats(0.1, 10))
    def test_torque_bound_at_rho(self, mu, m, rho):
        # contact at distance rho from the COM: |p x f| <= rho |f|
        c = Contact(np.array([rho, 0, 0]), np.array([-1.0, 0, 0]), 0)
        ws = wrench_primitives([c], mu, m, rho=rho)
        assert np.linalg.norm(ws.primitives[:, 3:], axis=1).max() <= 1 + 1e-12

    def test_torque_definition(self):
        c = Contact(np.array([0.3, 0.1, -0.2]), np.array([0.0, 0.0, 1.0]), 0)
        com = np.array([0.05, 0.0, 0.1])
        ws = wrench_primitives([c], 0.5, 6, com, rho=0.4)
        f = ws.primitives[:, :3]
        np.testing.assert_allclose(ws.primitives[:, 3:], np.cross(c.position - com, f) / 0.4, atol=1e-15)

    def test_doubling_rho_halves_torques(self):
        cs = point_contacts(np.random.default_rng(1).normal(size=(5, 3)))
        a = wrench_primitives(cs, rho=1.0).primitives
        b = wrench_primitives(cs, rho=2.0).primitives
        np.testing.assert_array_equal(b[:, 3:], a[:, 3:] / 2)
        np.testing.assert_array_equal(b[:, :3], a[:, :3])

    def test_degenerate_normal(self):
        with pytest.raises(GeometryError):
            wrench_primitives([Contact(np.zeros(3), np.array([0.0, 0.0, 0.5]), 3)])

    @pytest.mark.parametrize("kw", [{"cone_edges": 2}, {"rho": 0.0}, {"mu": -0.1}])
    def test_bad_parameters(self, kw):
        with pytest.raises(ValueError):
            wrench_primitives(point_contacts([[1, 0, 0]]), **kw)


# ----------------------------------------------------------------- epsilon


class TestEpsilon:
    def test_single_frictionless_contact(self):
        ws = wrench_primitives(point_contacts([[0, 0, 1]]), mu=0.0)
        assert epsilon_metric(ws) == 0.0

    def test_two_antipodal_point_contacts_positive(self):
        # literal fixture from the requirements; torsion about the x axis is unresisted,
        # so the exact value is 0 and this is expected to fail (see decisions ledger)
        ws = wrench_primitives(point_contacts([[1, 0, 0], [-1, 0, 0]]), 1.0, 8)
        assert epsilon_metric(ws) > 0

    def test_two_antipodal_point_contacts_exact_zero(self):
        ws = wrench_primitives(point_contacts([[1, 0, 0], [-1, 0, 0]]), 1.0, 8)
        assert np.abs(ws.primitives[:, 3]).max() < 1e-15
        assert epsilon_metric(ws) == 0.0

    def test_antipodal_finger_pads_positive(self):
        ws = wrench_primitives(point_contacts(np.vstack([fingertip([1, 0, 0]), fingertip([-1, 0, 0])])), 1.0, 8)
        eps = epsilon_metric(ws)
        assert eps > 0
        assert eps == pytest.approx(exact_epsilon(ws.primitives), rel=0.05)
        assert 0 < dense_epsilon(ws.primitives)

    @pytest.mark.parametrize("k", range(5))
    def test_within_five_percent_of_dense_oracle(self, k):
        w = RANDOM4[k].primitives
        assert epsilon_metric(w) == pytest.approx(dense_epsilon(w), rel=0.05)

    @pytest.mark.parametrize("k", range(5))
    def test_within_five_percent_of_facet_oracle(self, k):
        w = RANDOM4[k].primitives
        eps = epsilon_metric(w)
        exact = exact_epsilon(w)
        assert eps == pytest.approx(exact, rel=0.05)
        # every direction's support value bounds the inscribed radius from above
        assert eps >= exact - 1e-12

    def test_dense_oracle_bounds_from_above(self):
        w = RANDOM4[0].primitives
        assert dense_epsilon(w, n=200_000) >= epsilon_metric(w) - 1e-12

    def test_in_unit_interval(self):
        for ws in RANDOM4:
            assert 0 <= epsilon_metric(ws) <= 1

    def test_cross_polytope(self):
        # inscribed radius of the L1 unit ball in 6-D
        assert epsilon_metric(CROSS) == pytest.approx(1 / np.sqrt(6), rel=1e-6)

    @pytest.mark.parametrize("seed", range(3))
    def test_rotation_invariance(self, seed):
        # rotating contacts together with their cone edges rotates every wrench block-wise
        rot = Rotation.random(random_state=seed).as_matrix()
        w = RANDOM4[seed].primitives
        rotated = np.hstack([w[:, :3] @ rot.T, w[:, 3:] @ rot.T])
        assert epsilon_metric(rotated) == pytest.approx(epsilon_metric(w), rel=0.02)

    def test_cone_phase_is_frame_dependent(self):
        # the discretised cone is not carried along by a rotation of bare contacts
        pts = np.random.default_rng(100).normal(size=(4, 3))
        rot = Rotation.random(random_state=0).as_matrix()
        a = wrench_primitives(point_contacts(pts), 1.0, 8).primitives
        b = wrench_primitives(point_contacts(pts @ rot.T), 1.0, 8).primitives
        assert exact_epsilon(a) != pytest.approx(exact_epsilon(b), rel=1e-3)
        assert epsilon_metric(b) == pytest.approx(exact_epsilon(b), rel=0.05)

    def test_subset_monotone(self):
        r = np.random.default_rng(3)
        pts = r.normal(size=(8, 3))
        full = epsilon_metric(wrench_primitives(point_contacts(pts)))
        for k in range(4, 8):
            sub = epsilon_metric(wrench_primitives(point_contacts(pts[:k])))
            assert sub <= full + 1e-3

    def test_deterministic(self):
        w = RANDOM4[1]
        assert epsilon_metric(w, seed=4) == epsilon_metric(w, seed=4)

    def test_empty(self):
        with pytest.raises(GeometryError):
            epsilon_metric(np.zeros((0, 6)))


# ------------------------------------------------------------------ volume


class TestVolume:
    def test_cross_polytope_within_three_se(self):
        v, se = volume_metric(CROSS, seed=0)
        assert abs(v - CROSS_VOLUME) < 3 * se

    def test_doubling_scales_by_64(self):
        v1, _ = volume_metric(RANDOM4[0], n_samples=50_000, seed=2)
        v2, _ = volume_metric(2 * RANDOM4[0].primitives, n_samples=50_000, seed=2)
        assert v2 == pytest.approx(64 * v1, rel=1e-12)

    def test_five_dimensional_span_is_zero(self):
        w = np.random.default_rng(0).normal(size=(30, 6))
        w[:, 5] = 0.0
        assert volume_metric(w) == (0.0, 0.0)

    def test_too_few_primitives(self):
        assert volume_metric(np.eye(6)) == (0.0, 0.0)

    def test_matches_exact_hull_volume(self):
        w = np.random.default_rng(11).normal(size=(40, 6))
        v, se = volume_metric(w, n_samples=200_000, seed=1)
        assert abs(v - ConvexHull(w).volume) < 3 * se

    def test_deterministic(self):
        assert volume_metric(RANDOM4[2], 20_000, seed=5) == volume_metric(RANDOM4[2], 20_000, seed=5)

    def test_std_error_scaling(self):
        ns = np.array([20_000, 80_000, 320_000])
        se = np.array([volume_metric(CROSS, int(n), seed=3)[1] for n in ns])
        slope = np.polyfit(np.log(ns), np.log(se), 1)[0]
        assert slope == pytest.approx(-0.5, abs=0.1)

    def test_backends_agree(self, backend):
        w = RANDOM4[3].primitives
        x = np.random.default_rng(0).uniform(w.min(axis=0), w.max(axis=0), size=(20_000, 6))
        got = hull_membership(w, x)
        ref = ConvexHull(w).equations
        oracle = ((x @ ref[:, :-1].T + ref[:, -1]) <= 1e-9).all(axis=1)
        np.testing.assert_array_equal(got, oracle)

    @pytest.mark.parametrize("seed", range(3))
    def test_projection_agrees_with_halfspace(self, backend, seed):
        w = np.random.default_rng(seed).normal(size=(20 + 10 * seed, 6))
        x = np.random.default_rng(3).uniform(w.min(axis=0), w.max(axis=0), size=(1500, 6))
        a = hull_membership(w, x, "halfspace")
        b = hull_membership(w, x, "projection")
        assert a.sum() > 0
        np.testing.assert_array_equal(a, b)

    def test_projection_distances(self, backend):
        from hocontact import _kernels, _kernels_np

        fn = _kernels.hull_distance if backend == "numba" else _kernels_np.hull_distance
        q = np.zeros((3, 6))
        q[0, 0] = 2.0
        q[1, :2] = 1.0
        d = fn(CROSS, q, 100, 1e-9)
        np.testing.assert_allclose(d, [1.0, np.sqrt(0.5), 0.0], atol=1e-12)

    def test_projection_volume_cross_polytope(self):
        v, se = volume_metric(CROSS, n_samples=50_000, seed=0, method="projection")
        assert abs(v - CROSS_VOLUME) < 3 * se

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            hull_membership(CROSS, np.zeros((1, 6)), "sideways")


# ------------------------------------------------------------------ score


class TestScore:
    def test_formula(self):
        assert grasp_score(0.1, 0.2, 4, False) == pytest.approx(2 * np.sqrt(0.05), rel=1e-15)
        assert grasp_score(0.1, 0.2, 4, False) == pytest.approx(0.4472, abs=1e-4)

    def test_no_phalanges(self):
        assert grasp_score(0.5, 0.5, 0, True) == 0.0

    @settings(max_examples=50)
    @given(st.floats(0, 1), st.floats(0, 10), st.integers(0, 16))
    def test_palm_ratio(self, e, v, n):
        off = grasp_score(e, v, n, False)
        on = grasp_score(e, v, n, True)
        assert on == 3.0 * off

    def test_negative(self):
        with pytest.raises(ValueError):
            grasp_score(-0.1, 0.0, 1, False)


# ---------------------------------------------------------- contacts, N_p


@pytest.fixture(scope="module")
def cage():
    return cage_grasp()


class TestContacts:
    def test_far(self):
        assert extract_contacts(sphere(0.01, (1, 0, 0), 1), sphere(0.05, level=2)) == []

    def test_patch_of_twelve(self):
        obj = sphere(0.05, level=3)
        near_top = np.argsort(-obj.triangles.mean(axis=1)[:, 2])[:12]
        pts = obj.triangles[near_top].mean(axis=1) + 0.0008 * obj.face_normals[near_top]
        far = np.array([[1.0, 1.0, 1.0], [1.0, 1.1, 1.0], [1.1, 1.0, 1.0]])
        hand = TriMesh(np.vstack([pts, far]), [[12, 13, 14]])
        cs = extract_contacts(hand, obj, delta=0.001)
        assert sorted(c.vertex for c in cs) == list(range(12))
        from hocontact.spatial import brute_surface_distances

        for c in cs:
            assert brute_surface_distances(c.position[None], obj)[0][0] < 1e-12

    def test_sphere_normals_point_to_center(self):
        obj = sphere(0.05, level=4)
        r = np.random.default_rng(1)
        d = r.normal(size=(200, 3))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        hand = TriMesh(d * 0.0505, [[0, 1, 2]], validate=False)
        cs = extract_contacts(hand, obj, normals="smooth")
        assert len(cs) == 200
        angles = [np.arccos(np.clip(-c.normal @ c.position / np.linalg.norm(c.position), -1, 1)) for c in cs]
        assert max(angles) < 1e-2

    def test_face_normals_are_unit_and_inward(self):
        obj = sphere(0.05, level=4)
        hand = TriMesh(np.array([[0.0506, 0, 0], [0, 0.0506, 0], [0, 0, 0.0506]]), [[0, 1, 2]])
        for c in extract_contacts(hand, obj):
            assert abs(np.linalg.norm(c.normal) - 1) < 1e-9
            assert c.normal @ c.position < 0


class TestPhalanges:
    def test_disjoint(self, cage):
        hand, _ = cage
        assert count_phalanges(hand.mesh, sphere(0.01, (1, 0, 0), 1), hand.annotation) == (0, False)

    def test_full_wrap(self, cage):
        hand, obj = cage
        assert count_phalanges(hand.mesh, obj, hand.annotation) == (16, True)
        # per-set scan oracle
        from hocontact.spatial import brute_surface_distances

        d = brute_surface_distances(hand.mesh.vertices, obj)[0]
        assert all((d[p] <= 0.003).any() for p in hand.annotation.phalanges)

    def test_one_fingertip(self, cage):
        hand, _ = cage
        region = hand.annotation.regions[2]
        centroid = hand.mesh.vertices[region].mean(axis=0)
        inward = hand.grasp_center - centroid
        inward /= np.linalg.norm(inward)
        ball = sphere(0.005, centroid + 0.0052 * inward, 3)
        assert count_phalanges(hand.mesh, ball, hand.annotation) == (1, False)

    def test_no_phalanx_sets(self, cage):
        hand, obj = cage
        with pytest.raises(InputError):
            count_phalanges(hand.mesh, obj, HandAnnotation(hand.annotation.regions))


def test_wrenchset_len():
    assert len(WrenchSet(np.zeros((5, 6)))) == 5


def test_backend_flag_restored(backend):
    assert _accel.enabled() == (backend == "numba")
