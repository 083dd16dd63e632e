//! The deterministic error bound over randomly drawn well-conditioned systems.

use kacz_core::linalg::{DenseMatrix, LinearSystem, SpectralSummary};
use kacz_core::solvers::{run, solver_by_name, RunConfig};
use kacz_core::theory::{certificate, check_error_bound, check_monotone_error};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn gaussian(m: usize, n: usize, seed: u64) -> LinearSystem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<f64> = (0..m * n)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let x: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let a = DenseMatrix::from_row_major(m, n, data).unwrap();
    let b = (0..m)
        .map(|i| kacz_core::linalg::dot(a.row(i), &x))
        .collect();
    LinearSystem::build(a, b).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn bound_holds_for_every_iterate(seed in any::<u64>(), n in 5usize..=100, extra in 0usize..=100) {
        let m = (2 * n + extra).min(200);
        let sys = gaussian(m, n, seed);
        let summary = SpectralSummary::compute(&sys, &vec![0.0; n]).unwrap();
        let coherence = sys.coherence(None).unwrap();
        let cert = certificate(&sys, &summary, &coherence).unwrap();
        prop_assert!(cert.rho2 < cert.rho1 && cert.rho1 < cert.grk_factor());

        let cfg = RunConfig { seed, max_iters: 200_000, ..RunConfig::default() };
        let out = run(&sys, solver_by_name("gmirk").unwrap().as_ref(), &cfg, Some(&summary.x_star)).unwrap();
        let err0 = out.trace.initial_err_sq.unwrap();
        let report = check_error_bound(&out.trace, &cert, err0);
        prop_assert!(report.status.passed(), "{} (worst {})", report.status, report.worst_ratio);
        prop_assert!(check_monotone_error(&out.trace).status.passed());
    }
}
