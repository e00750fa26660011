# release criteria, one test per criterion; conftest prints a summary line each

import json
import time
from fractions import Fraction

import numpy as np
import pytest

import hflca
from hflca.cli import main as cli_main

from generators import (
    DYADICS,
    dyadic,
    random_flow_model,
    random_mixed_model,
    random_triangular_model,
)
from naive import assert_matches_exact, exact_trajectory

QUIET = hflca.SimulationOptions(warn_on_negative=False)

# published reference inventories for the bundled oil-to-motion system,
# 4 significant figures: CO2 kg, NOx g, crude oil cc
EV_REFERENCE = np.array([1.264e2, 5.260e2, 4.075e5])
ICV_REFERENCE = np.array([1.293e2, 1.228e2, 5.916e4])


def _solve_bundled(demand):
    model = hflca.load_model(hflca.bundled_path("oil-to-motion.model.json"))
    matrices = hflca.assemble_lca(model)
    return hflca.solve(matrices, demand)


def _check_reference(demand_file, demand, reference):
    start = time.perf_counter()
    solution = _solve_bundled(demand)
    elapsed = time.perf_counter() - start
    rel = np.abs(np.abs(solution.e) - reference) / reference
    assert np.all(rel < 0.005), f"relative errors {rel}"
    assert elapsed < 1.0
    # the CLI route must agree
    code = cli_main([
        "solve",
        "--model", str(hflca.bundled_path("oil-to-motion.model.json")),
        "--demand", str(hflca.bundled_path(demand_file)),
        "--format", "json",
        "--out", "-",
    ])
    assert code == 0


@pytest.mark.acceptance(1, "EV demand: inventory within 0.5% of references, under 1 s")
def test_ev_demand_inventory(capsys):
    _check_reference("ev-trip.demand.json", {"drive_ev": 500.0}, EV_REFERENCE)
    out = json.loads(capsys.readouterr().out)
    assert np.allclose(np.abs(out["e"]), EV_REFERENCE, rtol=0.005)


@pytest.mark.acceptance(2, "ICV demand: inventory within 0.5% of references, under 1 s")
def test_icv_demand_inventory(capsys):
    _check_reference("icv-trip.demand.json", {"drive_icv": 500.0}, ICV_REFERENCE)
    out = json.loads(capsys.readouterr().out)
    assert np.allclose(np.abs(out["e"]), ICV_REFERENCE, rtol=0.005)


@pytest.mark.acceptance(3, "reduced net incidence matrix matches the 8-row reference exactly, in order")
def test_incidence_matrix_exact():
    model = hflca.load_model(hflca.bundled_path("oil-to-motion.model.json"))
    reduced = hflca.eliminate_zero_rows(hflca.build_incidence(model))
    expected = np.array([
        [1.0, -61.9, 0.0, 0.0, 0.0],
        [0.0, 1.0, -3.816, 0.0, 0.0],
        [0.0, 0.0, 1.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, -53.3, 1.0],
        [1.030e-3, 2.515e-3, 0.0, 2.48e-1, 2e-4],
        [8.4e-4, 2.237e-1, 0.0, 2.17e-1, 5.4e-4],
        [-3.45, 0.0, 0.0, 0.0, -2.22],
    ])
    assert np.array_equal(reduced.net.toarray(), expected)
    assert reduced.row_pairs == (
        ("refined_oil", "refinery"),
        ("electricity", "power_plant"),
        ("distance", "ev"),
        ("distance", "icv"),
        ("gasoline", "refinery"),
        ("co2", "atmosphere"),
        ("nox", "atmosphere"),
        ("crude_oil", "earth"),
    )
    assert reduced.row_labels == (
        "Refined Oil at Oil Refinery",
        "Electricity at Oil-Fired Power Plant",
        "Distance at Electric Vehicle",
        "Distance at Internal Combustion Vehicle",
        "Gasoline at Oil Refinery",
        "CO2 at Atmosphere",
        "NOx at Atmosphere",
        "Crude Oil at Earth",
    )


@pytest.mark.acceptance(4, "one-step net run reproduces [Y;E] at 1e-6 relative, bundled and 20 seeded models")
def test_equivalence_bundled_and_random():
    model = hflca.load_model(hflca.bundled_path("oil-to-motion.model.json"))
    for demand in ({"drive_ev": 500.0}, {"drive_icv": 500.0}):
        report = hflca.verify_equivalence(model, demand)
        assert report.assumptions_held
        assert len(report.assumptions) == 3
        bound = 1e-6 * max(1.0, float(np.max(np.abs(report.target))))
        assert report.max_abs_discrepancy <= bound
        assert report.verdict == "equivalent"
    for i in range(20):
        rng = np.random.default_rng(1000 + i)
        random_model, demand = random_triangular_model(rng)
        report = hflca.verify_equivalence(random_model, demand)
        assert report.assumptions_held
        assert report.verdict == "equivalent", f"seed {1000 + i}"
    code = cli_main([
        "verify-equivalence",
        "--model", str(hflca.bundled_path("oil-to-motion.model.json")),
        "--demand", str(hflca.bundled_path("ev-trip.demand.json")),
        "--format", "json", "--out", "-",
    ])
    assert code == 0


@pytest.mark.acceptance(5, "state recurrences and token conservation hold exactly on 1000+ random triples")
def test_state_recurrences_exact():
    triples = 0
    for i in range(60):
        rng = np.random.default_rng(2000 + i)
        model = random_flow_model(rng)
        net = hflca.net_from_model(model)
        n_steps = 18
        dt = float(rng.choice([0.5, 1.0, 2.0]))

        qb0 = np.zeros(net.n_places)
        spots = rng.choice(net.n_places, size=min(4, net.n_places), replace=False)
        qb0[spots] = dyadic(rng, size=len(spots))
        qe0 = dyadic(rng, size=net.n_transitions)

        u_minus = dyadic(rng, size=(n_steps, net.n_transitions))
        u_minus *= rng.integers(0, 2, size=u_minus.shape)
        u_plus = u_minus * rng.integers(0, 2, size=u_minus.shape)
        # complete part of the initial in-flight stock at one step
        k_star = int(rng.integers(0, n_steps))
        u_plus[k_star] += (qe0 / 2.0) * (1.0 / dt)

        state = hflca.initial_state(net, dt=dt, marking=qb0, in_flight=qe0)
        schedule = hflca.explicit_schedule(u_minus, u_plus)
        trajectory = hflca.simulate(net, state, schedule, options=QUIET)

        qb_hist, qe_hist = exact_trajectory(
            net.minus.toarray(), net.plus.toarray(), qb0, qe0,
            u_minus, u_plus, Fraction(dt),
        )
        assert_matches_exact(trajectory, qb_hist, qe_hist)

        # token conservation: in-flight change telescopes the firing imbalance
        balance = [
            Fraction(q0) + Fraction(dt) * sum(
                Fraction(u_minus[k, j]) - Fraction(u_plus[k, j])
                for k in range(n_steps)
            )
            for j, q0 in enumerate(qe0.tolist())
        ]
        for got, want in zip(trajectory.final.qe.tolist(), balance):
            assert Fraction(got) == want
        triples += n_steps
    assert triples >= 1000


@pytest.mark.acceptance(6, "coinciding pull/inject firings reproduce the collapsed step bit for bit over K=10")
def test_instantaneous_collapse_bitwise():
    for i in range(40):
        rng = np.random.default_rng(3000 + i)
        model = random_flow_model(rng)
        net = hflca.net_from_model(model)
        u = rng.random((9, net.n_transitions)) * 3.0
        qb0 = rng.random(net.n_places)
        dt = float(rng.random() + 0.25)

        start = hflca.initial_state(net, dt=dt, marking=qb0)
        two_phase = hflca.simulate(
            net, start, hflca.explicit_schedule(u, u), options=QUIET
        )
        collapsed = hflca.simulate(
            net, start, hflca.instantaneous_schedule(u), options=QUIET
        )
        assert two_phase.horizon == collapsed.horizon == 10
        assert two_phase.qb_history.tobytes() == collapsed.qb_history.tobytes()
        assert two_phase.qe_history.tobytes() == collapsed.qe_history.tobytes()


@pytest.mark.acceptance(7, "small-net trajectories match an exhaustive token-pushing oracle exactly")
def test_small_net_token_oracle():
    options = hflca.SimulationOptions(integer_tokens=True, warn_on_negative=False)
    for i in range(50):
        rng = np.random.default_rng(4000 + i)
        model = random_flow_model(rng, integer_weights=True)
        net = hflca.net_from_model(model)
        assert net.n_transitions <= 6
        n_steps = int(rng.integers(1, 5))

        qb0 = rng.integers(0, 8, size=net.n_places).astype(float)
        qe0 = rng.integers(0, 5, size=net.n_transitions).astype(float)
        u_minus = rng.integers(0, 4, size=(n_steps, net.n_transitions)).astype(float)
        u_plus = u_minus * rng.integers(0, 2, size=u_minus.shape)
        k_star = int(rng.integers(0, n_steps))
        u_plus[k_star] += qe0  # complete every pre-run in-flight token too

        state = hflca.initial_state(net, dt=1.0, marking=qb0, in_flight=qe0)
        trajectory = hflca.simulate(
            net, state, hflca.explicit_schedule(u_minus, u_plus), options=options
        )
        qb_hist, qe_hist = exact_trajectory(
            net.minus.toarray(), net.plus.toarray(), qb0, qe0, u_minus, u_plus, 1
        )
        assert_matches_exact(trajectory, qb_hist, qe_hist)


@pytest.mark.acceptance(8, "kind-split contributions rebuild the marking change at 1e-12; delivery fixture flips the verdict")
def test_decomposition_completeness_and_fixture():
    for i in range(30):
        rng = np.random.default_rng(5000 + i)
        model = random_mixed_model(rng)
        structure = hflca.build_incidence(model)
        u = rng.random(structure.n_capabilities) * 5.0
        report = hflca.decompose_conversion_transportation(structure, u)
        assert len(report.conv_columns) and len(report.trans_columns)
        rebuilt = report.conv_contribution + report.trans_contribution
        scale = max(
            np.max(np.abs(report.total)), np.max(np.abs(rebuilt)), 1e-300
        )
        assert np.max(np.abs(rebuilt - report.total)) <= 1e-12 * scale
        dense = structure.reduced().net.toarray() @ u
        assert np.max(np.abs(rebuilt - dense)) <= 1e-12 * scale

    model = hflca.load_model(hflca.bundled_path("propane-heating.model.json"))
    structure = hflca.build_incidence(model)
    urban = hflca.decompose_conversion_transportation(
        structure, hflca.load_firing(hflca.bundled_path("urban-heating.firing.json"))
    )
    rural = hflca.decompose_conversion_transportation(
        structure, hflca.load_firing(hflca.bundled_path("rural-heating.firing.json"))
    )
    co2 = urban.row_labels.index("CO2 at Atmosphere")
    assert rural.trans_contribution[co2] > urban.trans_contribution[co2]
    assert urban.trans_contribution[co2] == 1.0
    assert rural.trans_contribution[co2] == 25.0
    urban_verdicts = hflca.transportation_dominance(urban)
    rural_verdicts = hflca.transportation_dominance(rural)
    assert urban_verdicts.verdicts[co2] == "negligible"
    assert rural_verdicts.verdicts[co2] == "must include transportation"

    # the verdict flips where delivery emissions reach 5% of the burn:
    # at 0.1 kg/km that is the 30 km round trip (3 kg against 60 kg)
    raw = hflca.serialize_model(model)
    for km, expected in ((29, "negligible"), (30, "must include transportation")):
        for process in raw["processes"]:
            if process["id"] == "deliver_urban":
                process["outputs"][1]["quantity"] = 0.1 * km
        variant = hflca.validate_model(raw)
        report = hflca.decompose_conversion_transportation(
            hflca.build_incidence(variant), {"deliver_urban": 1.0, "heat_urban": 1.0}
        )
        verdicts = hflca.transportation_dominance(report)
        row = report.row_labels.index("CO2 at Atmosphere")
        assert verdicts.verdicts[row] == expected, f"{km} km"


@pytest.mark.acceptance(9, "longer pull-to-inject duration shifts firings 3 steps and changes CO2 by the stored delta")
def test_duration_scenarios_shift_and_delta():
    expected = json.loads(hflca.bundled_path("pump-expected.json").read_text())
    model = hflca.load_model(hflca.bundled_path("pump-site.model.json"))
    net = hflca.net_from_model(model)
    el = net.capabilities.resolve("electrolyze").index

    results = {}
    pull_steps = {}
    inject_steps = {}
    for name in ("pump-fast", "pump-slow"):
        spec = hflca.load_scenario(hflca.bundled_path(f"{name}.scenario.json"))
        run = hflca.realize_scenario(spec, net)
        trajectory = hflca.simulate(
            net, run.state, run.schedule,
            options=run.options, overrides=run.overrides,
        )
        results[name] = trajectory.marking("co2", "atmosphere")
        pull_steps[name] = np.nonzero(run.schedule.u_minus[:, el])[0] + 1
        inject_steps[name] = np.nonzero(run.schedule.u_plus[:, el])[0] + 1
        assert np.all(trajectory.final.qe == 0.0)

    assert results["pump-fast"] == expected["co2_fast"]
    assert results["pump-slow"] == expected["co2_slow"]
    assert results["pump-slow"] - results["pump-fast"] == expected["delta"]
    shift = int(pull_steps["pump-slow"][0] - pull_steps["pump-fast"][0])
    assert shift == expected["firing_shift_steps"]
    assert int(inject_steps["pump-slow"][0] - inject_steps["pump-fast"][0]) == shift
    # the fast inject lands inside the stored mitigation window, the slow
    # inject outside it
    window = expected["clean_window_steps"]
    assert int(inject_steps["pump-fast"][0]) in window
    assert int(inject_steps["pump-slow"][0]) not in window
