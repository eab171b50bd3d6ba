use std::sync::Arc;

use approx::assert_relative_eq;
use obstacle_core::capacity::{capacitary_potential, capacity, point_capacity_decay, GridSet};
use obstacle_core::elliptic::{duality_check, solve_linear, LinearSolveConfig};
use obstacle_core::grid::{
    assemble, validate_monotone, AssembledOperator, CoefficientField, DomainGrid, DomainSpec, ExtendedGridFunction,
    GridFunction, TensorFn,
};
use obstacle_core::measure::{load_vector, regularize_load_by_truncation, GridMeasure, NodalMeasure};
use obstacle_core::obstacle::{
    check_mass_bound, check_obstacle_monotonicity, compare_reactions, solve_lcp, ViConfig, ViMethod,
};
use proptest::prelude::*;

#[derive(Clone, Debug)]
struct Coeff {
    a: f64,
    c: f64,
    s: f64,
    t: f64,
}

impl Coeff {
    fn field(&self) -> CoefficientField {
        let Coeff { a, c, s, t } = self.clone();
        let tensor: TensorFn = Arc::new(move |x: &[f64]| {
            let skew = t * (3.0 * x[1]).cos();
            let a11 = a * (1.0 + 0.4 * x[0]);
            [[a11, s + skew, 0.0], [s - skew, c, 0.0], [0.0, 0.0, 1.0]]
        });
        CoefficientField::new(2, 0.2, tensor)
    }
}

fn coeff() -> impl Strategy<Value = Coeff> {
    (0.6..1.6f64, 0.6..1.6f64, -0.15..0.15f64, prop_oneof![Just(0.0), 0.1..0.5f64])
        .prop_map(|(a, c, s, t)| Coeff { a, c, s, t })
}

fn op(level: u32, c: &Coeff) -> AssembledOperator {
    let grid = Arc::new(DomainGrid::build(&DomainSpec::unit_box(2), level).unwrap());
    assemble(grid, &c.field()).unwrap()
}

/// Nodal loads of either sign with a couple of large spikes.
fn load(n: usize) -> impl Strategy<Value = NodalMeasure> {
    (
        prop::collection::vec(-0.05..0.03f64, n),
        prop::collection::vec((0..n, -1.5..0.8f64), 0..3),
    )
        .prop_map(|(mut v, spikes)| {
            for (i, w) in spikes {
                v[i] += w;
            }
            NodalMeasure::new(v)
        })
}

fn nonpositive_obstacle(n: usize) -> impl Strategy<Value = ExtendedGridFunction> {
    prop::collection::vec(prop_oneof![8 => -0.2..0.0f64, 1 => Just(f64::NEG_INFINITY)], n)
        .prop_map(|v| ExtendedGridFunction::new(v).unwrap())
}

const N3: usize = 49;

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, ..ProptestConfig::default() })]

    #[test]
    fn assembled_operators_are_m_matrices(c in coeff(), level in 2u32..5) {
        let op = op(level, &c);
        let rep = validate_monotone(&op);
        prop_assert!(rep.pass, "{rep:?}");
        prop_assert_eq!(op.is_symmetric(), c.t == 0.0);
    }

    #[test]
    fn psor_and_active_set_agree(c in coeff(), b in load(N3), psi in nonpositive_obstacle(N3)) {
        let op = op(3, &c);
        let cfg = ViConfig { tol: 1e-12, ..ViConfig::default() };
        let p = solve_lcp(&op, &b, &psi, &cfg.clone().with_method(ViMethod::Psor)).unwrap();
        let a = solve_lcp(&op, &b, &psi, &cfg.with_method(ViMethod::ActiveSet)).unwrap();
        for i in 0..op.n() {
            prop_assert!((p.u[i] - a.u[i]).abs() <= 1e-7, "node {i}: {} vs {}", p.u[i], a.u[i]);
        }
    }

    #[test]
    fn solutions_are_feasible_and_complementary(c in coeff(), b in load(N3), psi in nonpositive_obstacle(N3)) {
        let op = op(3, &c);
        let sol = solve_lcp(&op, &b, &psi, &ViConfig::default()).unwrap();
        let tol = 1e-8 * sol.scale.max(1e-12);
        for i in 0..op.n() {
            prop_assert!(sol.u[i] >= psi[i] - tol);
            prop_assert!(sol.reaction[i] >= -tol);
            if psi.is_finite_at(i) {
                prop_assert!(sol.reaction[i] * (sol.u[i] - psi[i]) <= tol * sol.scale.max(1.0));
            } else {
                prop_assert!(sol.reaction[i].abs() <= tol);
            }
        }
    }

    #[test]
    fn reaction_mass_is_bounded_by_negative_data(c in coeff(), b in load(N3), psi in nonpositive_obstacle(N3)) {
        let op = op(3, &c);
        let sol = solve_lcp(&op, &b, &psi, &ViConfig::default()).unwrap();
        let rep = check_mass_bound(&sol, &b, None);
        prop_assert!(rep.pass, "{rep:?}");
    }

    #[test]
    fn larger_data_gives_smaller_reaction(c in coeff(), b in load(N3), extra in load(N3), psi in nonpositive_obstacle(N3)) {
        let op = op(3, &c);
        let b2 = NodalMeasure::new(b.iter().zip(extra.iter()).map(|(x, e)| x + e.abs()).collect());
        let rep = compare_reactions(&op, &b, &b2, &psi, &ViConfig::default()).unwrap();
        prop_assert!(rep.pass, "reaction gap {} solution gap {}", rep.worst_reaction_gap, rep.worst_solution_gap);
    }

    #[test]
    fn higher_obstacle_gives_higher_solution(c in coeff(), b in load(N3), psi in nonpositive_obstacle(N3), lift in prop::collection::vec(0.0..0.1f64, N3)) {
        let op = op(3, &c);
        let psi2 = ExtendedGridFunction::new(psi.iter().zip(&lift).map(|(p, l)| p + l).collect()).unwrap();
        let worst = check_obstacle_monotonicity(&op, &b, &psi, &psi2, &ViConfig::default()).unwrap();
        prop_assert!(worst <= 1e-8, "{worst}");
    }

    #[test]
    fn duality_holds(c in coeff(), b in load(N3), g in prop::collection::vec(-1.0..1.0f64, N3)) {
        let op = op(3, &c);
        let d = duality_check(&op, &b, &GridFunction::new(g).unwrap(), &LinearSolveConfig::default()).unwrap();
        prop_assert!(d.residual <= 1e-7 * d.scale.max(1e-300), "{d:?}");
    }

    #[test]
    fn truncated_loads_do_not_increase_variation(c in coeff(), b in load(N3), k in 1e-3..0.2f64) {
        let op = op(3, &c);
        let reg = regularize_load_by_truncation(&b, k, &op, &LinearSolveConfig::default()).unwrap();
        prop_assert!(reg.total_variation() <= b.total_variation() * (1.0 + 1e-10) + 1e-14);
    }

    #[test]
    fn capacity_is_monotone_subadditive_and_equals_mass(
        e in prop::collection::vec(any::<bool>(), N3),
        f in prop::collection::vec(any::<bool>(), N3),
    ) {
        let op = op(3, &Coeff { a: 1.0, c: 1.0, s: 0.0, t: 0.0 });
        let nodes = |m: &[bool]| (0..N3).filter(|&i| m[i]).collect::<Vec<_>>();
        let cfg = ViConfig::default();
        let se = GridSet::from_nodes(op.grid(), nodes(&e)).unwrap();
        let sf = GridSet::from_nodes(op.grid(), nodes(&f)).unwrap();
        let su = se.union(&sf);
        let (ce, cf, cu) = (
            capacity(&op, &se, &cfg).unwrap(),
            capacity(&op, &sf, &cfg).unwrap(),
            capacity(&op, &su, &cfg).unwrap(),
        );
        prop_assert!(ce <= cu + 1e-10 && cf <= cu + 1e-10);
        prop_assert!(cu <= (ce + cf) * (1.0 + 1e-8) + 1e-12);
        let pot = capacitary_potential(&op, &su, &cfg).unwrap();
        prop_assert!((pot.mass() - cu).abs() <= 1e-8 * cu.max(1e-12));
        prop_assert!(pot.u.iter().all(|v| (-1e-10..=1.0 + 1e-10).contains(v)));
    }
}

#[test]
fn truncation_is_a_contraction() {
    let u = GridFunction::new(vec![-3.0, -0.5, 0.0, 0.2, 7.0]).unwrap();
    let t = u.truncate(1.0).unwrap();
    assert_eq!(t.values(), &[-1.0, -0.5, 0.0, 0.2, 1.0]);
    assert_eq!(u.truncate(10.0).unwrap(), u);
}

#[test]
fn point_capacity_decays_like_inverse_log_in_two_dimensions() {
    let ops: Vec<_> = (3..=7).map(|l| op(l, &Coeff { a: 1.0, c: 1.0, s: 0.0, t: 0.0 })).collect();
    let table = point_capacity_decay(&ops, &[0.5, 0.5], &ViConfig::default()).unwrap();
    assert!(table.strictly_decreasing, "{:?}", table.rows);
    assert!(table.rate_ok, "{:?} vs {}", table.rates, table.model_rate);
}

#[test]
fn point_capacity_halves_per_level_in_three_dimensions() {
    let ops: Vec<_> = (3..=6)
        .map(|l| {
            let grid = Arc::new(DomainGrid::build(&DomainSpec::unit_box(3), l).unwrap());
            assemble(grid, &CoefficientField::identity(3)).unwrap()
        })
        .collect();
    let table = point_capacity_decay(&ops, &[0.5, 0.5, 0.5], &ViConfig::default()).unwrap();
    assert!(table.strictly_decreasing);
    assert!(table.rate_ok, "{:?}", table.rates);
    for r in &table.rates {
        assert_relative_eq!(*r, 0.5, max_relative = 0.25);
    }
}

#[test]
fn green_function_is_symmetric_for_symmetric_coefficients() {
    let c = Coeff { a: 1.3, c: 0.8, s: 0.1, t: 0.0 };
    let op = op(4, &c);
    let lin = LinearSolveConfig::default();
    let (i, j) = (40, 170);
    let unit = |k: usize| {
        let mut v = vec![0.0; op.n()];
        v[k] = 1.0;
        NodalMeasure::new(v)
    };
    let gi = solve_linear(&op, &unit(i), &lin).unwrap();
    let gj = solve_linear(&op, &unit(j), &lin).unwrap();
    assert_relative_eq!(gi[j], gj[i], max_relative = 1e-8);
    assert!(gi.iter().all(|v| *v >= -1e-14));
}

#[test]
fn point_mass_load_matches_nodal_unit() {
    let op = op(3, &Coeff { a: 1.0, c: 1.0, s: 0.0, t: 0.0 });
    let b = load_vector(&GridMeasure::atom(vec![0.5, 0.5], -2.0), op.grid()).unwrap();
    let centre = op.grid().nearest_interior(&[0.5, 0.5]);
    assert_eq!(b[centre], -2.0);
    assert_eq!(b.total_variation(), 2.0);
}
