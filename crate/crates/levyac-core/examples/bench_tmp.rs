use std::time::Instant;

use levyac_core::control::{train, ActorLossVariant};
use levyac_core::equilibrium::MertonUtility;
use levyac_core::problems::{
    lqr_benchmark_params, lqr_config, lqr_oracle, lqr_problem, merton_benchmark_params,
    merton_config, merton_oracle, merton_problem, Preset,
};

fn main() {
    let mp = merton_benchmark_params();
    let problem = merton_problem(&mp, MertonUtility::Power(0.5)).unwrap();
    let oracle = merton_oracle(&mp, MertonUtility::Power(0.5), 1.0).unwrap();
    let config = merton_config(Preset::Ci, 7).unwrap();
    let t0 = Instant::now();
    let out = train(&problem, &config, Some(&oracle)).unwrap();
    let last = out.report.rows.last().unwrap();
    println!(
        "merton ci: {:.1} s, error_value {:.4}% error_control {:.4}%",
        t0.elapsed().as_secs_f64(),
        last.error_value.unwrap() * 100.0,
        last.error_control.unwrap() * 100.0
    );

    let lp = lqr_benchmark_params(5).unwrap();
    let problem = lqr_problem(&lp).unwrap();
    let oracle = lqr_oracle(&lp, 1.0).unwrap();
    for variant in [ActorLossVariant::J, ActorLossVariant::JTilde] {
        let mut config = lqr_config(Preset::Ci, 7).unwrap();
        config.actor_loss = variant;
        let t0 = Instant::now();
        let out = train(&problem, &config, Some(&oracle)).unwrap();
        let last = out.report.rows.last().unwrap();
        println!(
            "lqr d=5 {:?}: {:.1} s, error_value {:.4}% error_control {:.4}%",
            variant,
            t0.elapsed().as_secs_f64(),
            last.error_value.unwrap() * 100.0,
            last.error_control.unwrap() * 100.0
        );
    }
}
