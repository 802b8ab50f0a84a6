use proptest::prelude::*;
use zomd::{bregman, mirror_step, FeasibleSet, ProxSetup};

fn simplex_point(raw: Vec<f64>) -> Vec<f64> {
    let total: f64 = raw.iter().sum();
    raw.iter().map(|r| r / total).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    // Pinsker: KL(x‖z) ≥ ½‖x − z‖₁² ≥ ½‖x − z‖₂²
    #[test]
    fn entropy_bregman_is_strongly_convex(
        (a, b) in (2usize..9).prop_flat_map(|n| (
            prop::collection::vec(0.01f64..1.0, n),
            prop::collection::vec(0.01f64..1.0, n),
        ))
    ) {
        let (x, z) = (simplex_point(a), simplex_point(b));
        let setup = ProxSetup::entropy(x.len()).unwrap();
        let v = bregman(&setup, &x, &z).unwrap();
        let l1: f64 = x.iter().zip(&z).map(|(p, q)| (p - q).abs()).sum();
        prop_assert!(v >= 0.5 * l1 * l1 - 1e-12);
    }

    #[test]
    fn entropy_step_stays_on_simplex(
        (a, v, h) in (2usize..9).prop_flat_map(|n| (
            prop::collection::vec(0.01f64..1.0, n),
            prop::collection::vec(-50.0f64..50.0, n),
            0.001f64..10.0,
        ))
    ) {
        let x = simplex_point(a);
        let setup = ProxSetup::entropy(x.len()).unwrap();
        let y = mirror_step(&setup, &x, &v, h).unwrap();
        prop_assert!((y.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(y.iter().all(|c| *c > 0.0));
    }

    // the step beats any other feasible point on h⟨v,u⟩ + V(u, x)
    #[test]
    fn ball_step_is_prox_optimal(
        (x, v, u, h) in (1usize..7).prop_flat_map(|n| (
            prop::collection::vec(-0.5f64..0.5, n),
            prop::collection::vec(-5.0f64..5.0, n),
            prop::collection::vec(-0.5f64..0.5, n),
            0.01f64..2.0,
        ))
    ) {
        let setup = ProxSetup::euclidean(FeasibleSet::unit_ball(x.len()).unwrap()).unwrap();
        let (x, u) = (setup.set().project(&x), setup.set().project(&u));
        let y = mirror_step(&setup, &x, &v, h).unwrap();
        let value = |p: &[f64]| {
            let lin: f64 = p.iter().zip(&v).map(|(a, b)| h * a * b).sum::<f64>();
            lin + bregman(&setup, p, &x).unwrap()
        };
        prop_assert!(setup.set().contains(&y));
        prop_assert!(value(&y) <= value(&u) + 1e-12);
    }
}
