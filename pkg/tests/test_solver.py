import itertools
import math

import numpy as np
import pytest

from errors import InvalidModel, ResourceExhausted
from solver import LinearProgram, Relation, Status, solve_lp, solve_milp, to_lp_text


def test_bound_active_minimum():
    lp = LinearProgram()
    x = lp.add_variable("x", -math.inf)
    lp.add_constraint({x: 1.0}, Relation.GE, 1.0)
    lp.add_constraint({x: 1.0}, Relation.LE, 2.0)
    lp.add_objective({x: 1.0})
    sol = solve_lp(lp)
    assert sol.status == Status.OPTIMAL
    assert sol[x] == pytest.approx(1.0)
    assert sol.objective == pytest.approx(1.0)


def test_simplex_vertex():
    lp = LinearProgram()
    x, y = lp.add_variable("x"), lp.add_variable("y")
    lp.add_constraint({x: 1.0, y: 1.0}, Relation.LE, 1.0)
    lp.add_objective({x: -2.0, y: -1.0})
    sol = solve_lp(lp)
    assert sol.is_optimal
    assert (sol[x], sol[y]) == (pytest.approx(1.0), pytest.approx(0.0))
    assert sol.objective == pytest.approx(-2.0)


def test_infeasible_and_unbounded():
    lp = LinearProgram()
    x = lp.add_variable("x")
    lp.add_constraint({x: 1.0}, Relation.GE, 2.0)
    lp.add_constraint({x: 1.0}, Relation.LE, 1.0)
    assert solve_lp(lp).status == Status.INFEASIBLE

    lp = LinearProgram()
    x, y = lp.add_variable("x"), lp.add_variable("y")
    lp.add_constraint({x: 1.0, y: -1.0}, Relation.LE, 1.0)
    lp.add_objective({x: -1.0})
    assert solve_lp(lp).status == Status.UNBOUNDED


def test_free_variable_and_constant():
    lp = LinearProgram()
    x = lp.add_variable("x", -math.inf, math.inf)
    lp.add_constraint({x: 2.0}, Relation.GE, -6.0)
    lp.add_objective({x: 1.0}, constant=10.0)
    sol = solve_lp(lp)
    assert sol[x] == pytest.approx(-3.0)
    assert sol.objective == pytest.approx(7.0)


def test_equality_rows():
    lp = LinearProgram()
    x, y = lp.add_variable("x", 0, 4), lp.add_variable("y", 0, 4)
    lp.add_constraint({x: 1.0, y: 1.0}, Relation.EQ, 5.0)
    lp.add_objective({x: 1.0, y: 2.0})
    sol = solve_lp(lp)
    assert (sol[x], sol[y]) == (pytest.approx(4.0), pytest.approx(1.0))


def test_malformed_programs():
    lp = LinearProgram()
    lp.add_variable("x")
    with pytest.raises(InvalidModel):
        lp.add_variable("x")

    lp.add_constraint({"y": 1.0}, Relation.LE, 1.0)
    with pytest.raises(InvalidModel):
        solve_lp(lp)

    lp = LinearProgram()
    x = lp.add_variable("x")
    lp.add_constraint({x: math.inf}, Relation.LE, 1.0)
    with pytest.raises(InvalidModel):
        solve_lp(lp)

    lp = LinearProgram()
    lp.add_variable("c", is_binary=True)
    with pytest.raises(InvalidModel):
        solve_lp(lp)


def test_binary_bounds_are_clipped():
    lp = LinearProgram()
    lp.add_variable("c", -5.0, 7.0, is_binary=True)
    var = lp.variable("c")
    assert (var.lower, var.upper) == (0.0, 1.0)


def test_milp_single_integer_point():
    lp = LinearProgram()
    x = lp.add_variable("x", is_binary=True)
    lp.add_constraint({x: 1.0}, Relation.LE, 0.5)
    lp.add_objective({x: -1.0})
    sol = solve_milp(lp)
    assert sol.is_optimal
    assert sol[x] == 0.0
    assert sol.objective == pytest.approx(0.0)


def test_milp_mixed():
    lp = LinearProgram()
    x = lp.add_variable("x", is_binary=True)
    y = lp.add_variable("y", 0.0, 1.0)
    lp.add_constraint({x: 1.0, y: 1.0}, Relation.LE, 1.5)
    lp.add_objective({x: -1.0, y: -1.0})
    sol = solve_milp(lp)
    assert sol[x] == 1.0
    assert sol[y] == pytest.approx(0.5)
    assert sol.objective == pytest.approx(-1.5)


def test_milp_integral_relaxation_needs_no_branching():
    lp = LinearProgram()
    x = lp.add_variable("x", is_binary=True)
    y = lp.add_variable("y", 0.0, 3.0)
    lp.add_constraint({x: 1.0, y: 1.0}, Relation.LE, 2.0)
    lp.add_objective({x: -2.0, y: -1.0})
    sol = solve_milp(lp)
    assert sol.nodes == 1
    relaxed = solve_lp(lp, relax_binaries=True)
    assert sol.objective == pytest.approx(relaxed.objective)
    assert sol.values == pytest.approx(relaxed.values)


def test_milp_node_limit_reports_incumbent():
    lp = LinearProgram()
    weights = [3.0, 5.0, 7.0, 9.0, 11.0, 13.0]
    cs = [lp.add_variable(f"c{i}", is_binary=True) for i in range(len(weights))]
    lp.add_constraint(dict(zip(cs, weights)), Relation.LE, 20.5)
    lp.add_objective({c: -w - 0.1 * i for i, (c, w) in enumerate(zip(cs, weights))})
    with pytest.raises(ResourceExhausted) as info:
        solve_milp(lp, node_limit=1)
    incumbent = info.value.incumbent
    if incumbent is not None:
        assert all(incumbent[c] in (0.0, 1.0) for c in cs)
        assert sum(w * incumbent[c] for c, w in zip(cs, weights)) <= 20.5 + 1e-9


def test_milp_branches_when_rounding_fails():
    lp = LinearProgram()
    x = lp.add_variable("x", is_binary=True)
    y = lp.add_variable("y", 0.0, 1.0)
    lp.add_constraint({x: 2.0, y: 1.0}, Relation.EQ, 1.0)
    lp.add_objective({y: 1.0})
    assert solve_lp(lp, relax_binaries=True).objective == pytest.approx(0.0)
    sol = solve_milp(lp)
    assert sol.is_optimal
    assert (sol[x], sol[y]) == (0.0, pytest.approx(1.0))
    assert sol.objective == pytest.approx(1.0)


def test_milp_equality_knapsack():
    # relaxation takes b and half of c; no rounding of it meets the row
    lp = LinearProgram()
    a, b, c = (lp.add_variable(name, is_binary=True) for name in "abc")
    lp.add_constraint({a: 2.0, b: 3.0, c: 4.0}, Relation.EQ, 5.0)
    lp.add_objective({a: -3.0, b: -4.9, c: -6.4})
    assert solve_lp(lp, relax_binaries=True).objective == pytest.approx(-8.1)
    sol = solve_milp(lp)
    assert sol.is_optimal
    assert (sol[a], sol[b], sol[c]) == (1.0, 1.0, 0.0)
    assert sol.objective == pytest.approx(-7.9)


def test_milp_without_integer_point():
    lp = LinearProgram()
    zs = [lp.add_variable(f"z{i}", is_binary=True) for i in range(3)]
    lp.add_constraint(dict(zip(zs, [2.0, 4.0, 6.0])), Relation.EQ, 7.0)
    lp.add_objective({z: 1.0 for z in zs})
    assert solve_lp(lp, relax_binaries=True).is_optimal
    assert solve_milp(lp).status == Status.INFEASIBLE


def _random_lp(rng: np.random.Generator):
    n = int(rng.integers(2, 7))
    m = int(rng.integers(1, 5))
    upper = rng.uniform(1.0, 5.0, n)
    x0 = rng.uniform(0.0, 1.0, n) * upper
    A = rng.normal(size=(m, n))
    b = A @ x0 + rng.uniform(0.1, 2.0, m)
    c = rng.normal(size=n)
    eq = rng.normal(size=n) if rng.random() < 0.3 else None
    return n, upper, A, b, c, eq, (None if eq is None else float(eq @ x0))


def _vertex_oracle(n, upper, A, b, c, eq, eq_rhs) -> float:
    # all facets as rows g·x <= h, the equality (if any) always active
    G = np.vstack([A, np.eye(n), -np.eye(n)])
    h = np.r_[b, upper, np.zeros(n)]
    need = n if eq is None else n - 1
    combos = np.array(list(itertools.combinations(range(G.shape[0]), need)), dtype=int)
    mats = G[combos]
    rhs = h[combos]
    if eq is not None:
        mats = np.concatenate([mats, np.broadcast_to(eq, (len(combos), 1, n))], axis=1)
        rhs = np.concatenate([rhs, np.full((len(combos), 1), eq_rhs)], axis=1)
    ok = np.abs(np.linalg.det(mats)) > 1e-9
    points = np.linalg.solve(mats[ok], rhs[ok][..., None])[..., 0]
    feasible = np.all(points @ G.T <= h + 1e-7, axis=1)
    if eq is not None:
        feasible &= np.abs(points @ eq - eq_rhs) <= 1e-7
    return float((points[feasible] @ c).min())


def test_random_lps_match_vertex_enumeration():
    rng = np.random.default_rng(2024)
    for _ in range(100):
        n, upper, A, b, c, eq, eq_rhs = _random_lp(rng)
        lp = LinearProgram()
        xs = [lp.add_variable(f"x{j}", 0.0, upper[j]) for j in range(n)]
        for i in range(A.shape[0]):
            if i % 2:
                lp.add_constraint({x: -a for x, a in zip(xs, A[i])}, Relation.GE, -b[i])
            else:
                lp.add_constraint(dict(zip(xs, A[i])), Relation.LE, b[i])
        if eq is not None:
            lp.add_constraint(dict(zip(xs, eq)), Relation.EQ, eq_rhs)
        lp.add_objective(dict(zip(xs, c)))

        sol = solve_lp(lp)
        assert sol.is_optimal
        assert sol.objective == pytest.approx(_vertex_oracle(n, upper, A, b, c, eq, eq_rhs), abs=1e-6)

        # feasibility of the returned point and weak duality against sampled feasible points
        x = sol.vector(xs)
        assert np.all(A @ x <= b + 1e-6)
        samples = rng.uniform(0.0, 1.0, (200, n)) * upper
        inside = np.all(samples @ A.T <= b, axis=1)
        if eq is None and inside.any():
            assert np.all(samples[inside] @ c >= sol.objective - 1e-7)


def _random_milp(rng: np.random.Generator):
    nb = int(rng.integers(1, 5))
    nc = int(rng.integers(0, 4))
    m = int(rng.integers(1, 5))
    c_bin = rng.normal(size=nb)
    c_con = rng.normal(size=nc)
    upper = rng.uniform(1.0, 4.0, nc)
    A_bin = rng.normal(size=(m, nb))
    A_con = rng.normal(size=(m, nc))
    z0 = rng.integers(0, 2, nb).astype(float)
    y0 = rng.uniform(0.0, 1.0, nc) * upper
    b = A_bin @ z0 + A_con @ y0 + rng.uniform(0.0, 1.0, m)
    return nb, nc, c_bin, c_con, upper, A_bin, A_con, b


def _build_milp(data, fixed=None):
    nb, nc, c_bin, c_con, upper, A_bin, A_con, b = data
    lp = LinearProgram()
    zs = [lp.add_variable(f"z{j}", is_binary=fixed is None) for j in range(nb)]
    ys = [lp.add_variable(f"y{j}", 0.0, upper[j]) for j in range(nc)]
    if fixed is not None:
        for z, value in zip(zs, fixed):
            lp.fix(z, value)
    for i in range(len(b)):
        lp.add_constraint({**dict(zip(zs, A_bin[i])), **dict(zip(ys, A_con[i]))}, Relation.LE, b[i])
    lp.add_objective({**dict(zip(zs, c_bin)), **dict(zip(ys, c_con))})
    return lp, zs


def test_random_milps_match_binary_enumeration():
    rng = np.random.default_rng(7)
    for _ in range(60):
        data = _random_milp(rng)
        lp, zs = _build_milp(data)
        sol = solve_milp(lp)
        assert sol.is_optimal
        assert all(sol[z] in (0.0, 1.0) for z in zs)

        best = math.inf
        for assignment in itertools.product((0.0, 1.0), repeat=data[0]):
            sub = solve_lp(_build_milp(data, assignment)[0])
            if sub.is_optimal:
                best = min(best, sub.objective)
        assert sol.objective == pytest.approx(best, abs=1e-6)


def test_solves_are_deterministic():
    rng = np.random.default_rng(11)
    data = _random_milp(rng)
    first = solve_milp(_build_milp(data)[0])
    second = solve_milp(_build_milp(data)[0])
    assert first.values == second.values
    assert first.objective == second.objective


def test_lp_text_dump():
    lp = LinearProgram("demo")
    x = lp.add_variable("x[0]", 0.0, 2.0)
    c = lp.add_variable("c[0]", is_binary=True)
    lp.add_constraint({x: 1.0, c: -2.0}, Relation.LE, 0.0, "link[0]")
    lp.add_objective({x: -1.0}, constant=3.0)
    text = to_lp_text(lp)
    assert "Minimize" in text and "Subject To" in text and "Bounds" in text
    assert " link(0): 1 x(0) - 2 c(0) <= 0" in text
    assert "Binaries\n c(0)" in text
    assert text.endswith("End\n")
