use pdmp_exit::exit::{horizon_bound, min_horizon, recursion_step, worst_case_moments};
use pdmp_exit::models::corrosion::ENVIRONMENTS;
use pdmp_exit::models::{corrosion_u_star, CorrosionModel, PoissonModel};
use pdmp_exit::quantization::nearest_neighbor;
use pdmp_exit::{hybrid_distance, GridPoint, HybridPoint, Mode, PdmpModel};
use proptest::prelude::*;

fn close(a: &HybridPoint, b: &HybridPoint, rel: f64) -> bool {
    a.mode == b.mode
        && a.coords
            .iter()
            .zip(&b.coords)
            .all(|(x, y)| (x - y).abs() <= rel * x.abs().max(y.abs()).max(1e-12))
}

fn point(mode: u16, x: f64, y: f64) -> HybridPoint {
    HybridPoint::new(Mode(mode), &[x, y])
}

proptest! {
    #[test]
    fn poisson_flow_semigroup(y in -5.0f64..20.0, s in 0.0f64..10.0, t in 0.0f64..10.0) {
        let m = PoissonModel::default();
        let x = PoissonModel::state(y);
        prop_assert!(close(&m.flow(&m.flow(&x, s), t), &m.flow(&x, s + t), 1e-14));
    }

    #[test]
    fn corrosion_flow_semigroup(
        env in 0usize..3,
        d in 0.0f64..0.2,
        age in 0.0f64..2e5,
        frac in 0.0f64..1.0,
        s in 0.0f64..1e5,
        t in 0.0f64..1e5,
    ) {
        let m = CorrosionModel::default();
        let e = ENVIRONMENTS[env];
        let rho = e.rho_min + frac * (e.rho_max - e.rho_min);
        let x = CorrosionModel::state(env, false, d, age, rho, 0.0);
        prop_assert!(close(&m.flow(&m.flow(&x, s), t), &m.flow(&x, s + t), 1e-10));
        let gamma = s + t + 1.0;
        let x = CorrosionModel::state(env, true, 0.0, age, rho, gamma);
        prop_assert!(close(&m.flow(&m.flow(&x, s), t), &m.flow(&x, s + t), 1e-10));
    }

    #[test]
    fn corrosion_u_star_decreases_in_depth(env in 0usize..3, frac in 0.0f64..1.0, d1 in 0.0f64..0.2, d2 in 0.0f64..0.2) {
        let e = ENVIRONMENTS[env];
        let rho = e.rho_min + frac * (e.rho_max - e.rho_min);
        let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
        // Root finding is accurate to a relative 1e-8.
        let (u_lo, u_hi) = (corrosion_u_star(lo, rho, e.eta), corrosion_u_star(hi, rho, e.eta));
        prop_assert!(u_lo >= u_hi * (1.0 - 1e-7));
    }

    #[test]
    fn exit_time_shrinks_deeper_in_u(y1 in -5.0f64..10.0, y2 in -5.0f64..10.0) {
        let m = PoissonModel::default();
        let (lo, hi) = if y1 <= y2 { (y1, y2) } else { (y2, y1) };
        prop_assert!(m.flow_exit_time(&PoissonModel::state(lo)) >= m.flow_exit_time(&PoissonModel::state(hi)));
    }

    #[test]
    fn recursion_step_is_linear(
        p1 in -2.0f64..2.0, p2 in -2.0f64..2.0, r1 in 0.0f64..1.0, r2 in 0.0f64..1.0,
        a in -3.0f64..3.0, b in -3.0f64..3.0, q in 0.0f64..1.0, q_next in 1e-3f64..1.0,
    ) {
        let lhs = recursion_step(a * p1 + b * p2, q, a * r1 + b * r2, q_next);
        let rhs = a * recursion_step(p1, q, r1, q_next) + b * recursion_step(p2, q, r2, q_next);
        prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs()));
        prop_assert_eq!(recursion_step(p1, q, r1, 0.0), 0.0);
    }

    #[test]
    fn hybrid_distance_is_a_metric_within_modes(
        a in prop::array::uniform2(-10.0f64..10.0),
        b in prop::array::uniform2(-10.0f64..10.0),
        c in prop::array::uniform2(-10.0f64..10.0),
    ) {
        let (x, y, z) = (point(0, a[0], a[1]), point(0, b[0], b[1]), point(0, c[0], c[1]));
        prop_assert_eq!(hybrid_distance(&x, &y), hybrid_distance(&y, &x));
        prop_assert!(hybrid_distance(&x, &z) <= hybrid_distance(&x, &y) + hybrid_distance(&y, &z) + 1e-12);
        prop_assert_eq!(hybrid_distance(&x, &x), 0.0);
        prop_assert_eq!(hybrid_distance(&x, &point(1, a[0], a[1])), f64::INFINITY);
    }

    #[test]
    fn nearest_neighbor_matches_brute_force(
        grid in prop::collection::vec((0u16..2, -5.0f64..5.0, -5.0f64..5.0, 0.0f64..3.0), 1..40),
        query in (0u16..2, -5.0f64..5.0, -5.0f64..5.0, 0.0f64..3.0),
    ) {
        let grid: Vec<GridPoint> = grid.iter().map(|&(m, x, y, t)| GridPoint::new(point(m, x, y), t)).collect();
        let q = point(query.0, query.1, query.2);
        let found = nearest_neighbor(&q, query.3, &grid);
        let cost = |g: &GridPoint| (hybrid_distance(&g.state, &q).powi(2) + (g.time - query.3).powi(2)).sqrt();
        let best = grid.iter().map(cost).fold(f64::INFINITY, f64::min);
        if best.is_infinite() {
            prop_assert!(found.is_err());
        } else {
            prop_assert!((cost(&grid[found.unwrap()]) - best).abs() <= 1e-12);
        }
    }

    #[test]
    fn horizon_bound_decreases_past_twice_k(c in 0.1f64..5.0, eps in 0.05f64..10.0, k in 0.5f64..20.0) {
        let (m, _) = worst_case_moments(c, eps);
        let start = (2.0 * k / m).floor() as usize + 1;
        let bounds: Vec<f64> = (start..start + 50).map(|n| horizon_bound(c, eps, n, k).unwrap()).collect();
        prop_assert!(bounds.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn min_horizon_non_increasing_in_delta(c in 0.1f64..5.0, eps in 0.05f64..10.0, k in 0.5f64..20.0, d1 in 1e-3f64..1.0, d2 in 1e-3f64..1.0) {
        let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
        let (n_lo, n_hi) = (min_horizon(c, eps, k, lo).unwrap(), min_horizon(c, eps, k, hi).unwrap());
        prop_assert!(n_hi <= n_lo);
        prop_assert!(horizon_bound(c, eps, n_lo, k).unwrap() <= lo);
        if n_lo > 1 {
            let below = horizon_bound(c, eps, n_lo - 1, k);
            prop_assert!(below.map_or(true, |b| b > lo));
        }
    }
}
