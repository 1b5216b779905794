//! Filters on the linear-Gaussian model against the exact Kalman likelihood.

use spatpomp::filters::{block_particle_filter, enkf, particle_filter, FilterConfig};
use spatpomp::pomp::{simulate, unit_blocks, TimeGrid};
use spatpomp::rng::derive_seed;
use spatpomp::stats::{mean, std_error};
use spatpomp::toy::{kalman, LinearGaussianModel, LinearGaussianParams};
use spatpomp::Execution;

const P: LinearGaussianParams = LinearGaussianParams { a: 0.8, q: 0.6, r: 1.0, m0: 0.5, p0: 2.0 };

fn lg_data(units: usize, n: usize, seed: u64) -> spatpomp::pomp::ObservationPanel {
    let grid = TimeGrid::daily(0.0, n, 1.0).unwrap();
    let model = LinearGaussianModel::new(units);
    simulate(&model, &P, &grid, 1, seed, Execution::Sequential).unwrap().remove(0).observations
}

#[test]
fn pf_is_close_to_kalman() {
    let data = lg_data(1, 15, 11);
    let exact = kalman(&P, &data).loglik;
    let lls: Vec<f64> = (0..20)
        .map(|r| {
            let cfg = FilterConfig::new(2000, derive_seed(4, &[r]));
            particle_filter(&LinearGaussianModel::new(1), &P, &data, &cfg).unwrap().loglik_total
        })
        .collect();
    let (m, se) = (mean(&lls), std_error(&lls));
    assert!((m - exact).abs() < 4.0 * se + 0.02, "pf {m} ± {se}, kalman {exact}");
}

#[test]
fn bpf_with_unit_blocks_factorizes_over_independent_units() {
    // Units are independent, so unit blocks lose nothing: every block is an exact PF.
    let data = lg_data(3, 10, 2);
    let exact = kalman(&P, &data).loglik;
    let lls: Vec<f64> = (0..20)
        .map(|r| {
            let cfg = FilterConfig::new(1000, derive_seed(9, &[r]));
            block_particle_filter(&LinearGaussianModel::new(3), &P, &data, &unit_blocks(3), &cfg)
                .unwrap()
                .loglik_total
        })
        .collect();
    let (m, se) = (mean(&lls), std_error(&lls));
    assert!((m - exact).abs() < 4.0 * se + 0.02, "bpf {m} ± {se}, kalman {exact}");
}

#[test]
fn enkf_matches_kalman_means() {
    let data = lg_data(1, 12, 5);
    let exact = kalman(&P, &data);
    let cfg = FilterConfig::new(4000, 17).with_filter_mean();
    let res = enkf(&LinearGaussianModel::new(1), &P, &data, &cfg).unwrap();
    assert!((res.loglik_total - exact.loglik).abs() < 0.3, "{} vs {}", res.loglik_total, exact.loglik);
    let means = res.filter_mean.unwrap();
    for (n, m) in means.iter().enumerate() {
        assert!((m.get(0, 0) - exact.means[n][0]).abs() < 0.1, "time {n}");
    }
}

#[test]
fn sequential_and_parallel_agree_bitwise() {
    let data = lg_data(4, 8, 3);
    let model = LinearGaussianModel::new(4);
    let run = |exec| {
        let cfg = FilterConfig::new(300, 21).with_exec(exec);
        block_particle_filter(&model, &P, &data, &unit_blocks(4), &cfg).unwrap()
    };
    let (a, b) = (run(Execution::Sequential), run(Execution::Parallel));
    assert_eq!(a.loglik_total.to_bits(), b.loglik_total.to_bits());
    assert_eq!(a.cond_loglik, b.cond_loglik);
}
