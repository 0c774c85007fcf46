//! With a fixed price signal the gap of every non-REP method should vary by
//! at most one percentage point between repetitions at large fleet sizes.
//! DFO is left out only for runtime (about 10 s per 10,000-EV repetition).

use flexbench::bench::{run_benchmark, BenchConfig, Method};
use flexbench::domain::TimeGrid;
use flexbench::prices::PriceConfig;
use flexbench::profiles::ProfileGenConfig;

#[test]
fn gap_spread_on_sin_at_10k_evs() {
    let methods = vec![Method::Uncontrolled, Method::VbLl, Method::VbEd, Method::VbLlFpc, Method::VbLlGrpd, Method::Fo];
    let cfg = BenchConfig {
        methods: methods.clone(),
        price: PriceConfig::Sin {},
        fleet: ProfileGenConfig { n_evs: 10_000, ..Default::default() },
        seeds: (0..5).collect(),
        ..Default::default()
    };
    let records = run_benchmark(&cfg, &TimeGrid::default()).unwrap();
    for m in methods {
        let gaps: Vec<f64> = records.iter().filter(|r| r.method == m).map(|r| r.gap.unwrap()).collect();
        let hi = gaps.iter().cloned().fold(f64::MIN, f64::max);
        let lo = gaps.iter().cloned().fold(f64::MAX, f64::min);
        println!("{m}: gap spread {:.4} over {} seeds", hi - lo, gaps.len());
        assert!(hi - lo <= 0.01, "{m}: spread {}", hi - lo);
    }
}
