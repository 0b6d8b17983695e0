//! A short tour: validate a preset, build its volume table, estimate a
//! control distance, and classify a half-space domain.

use mpgeo::criteria::{classify_mp, SetDescriptor};
use mpgeo::distance::{DistanceEstimator, OptimizerConfig};
use mpgeo::gamma::GammaContext;
use mpgeo::volume::build_volume_table;

fn main() -> Result<(), mpgeo::MpError> {
    let spec = mpgeo::heisenberg()?;
    println!("operator `{}`: N = {}, Q = {}", spec.name(), spec.dim(), spec.q());

    let table = build_volume_table(&spec)?;
    println!("omega_Q = {}", table.omega_q());
    println!("Lambda(0, 1) = {}", table.lambda(&[0.0, 0.0, 0.0], 1.0));

    let estimator = DistanceEstimator::new(&spec);
    let d = estimator.estimate(&[0.0; 3], &[1.0, 0.0, 0.0], &OptimizerConfig::medium(7));
    println!(
        "d(0, e1) <= {:.4} (endpoint gap {:.1e}, converged: {})",
        d.upper, d.endpoint_gap, d.converged
    );

    let ctx = GammaContext::new(table, OptimizerConfig::light(7), 2.0);
    let domain = SetDescriptor::halfspace(vec![1.0, 0.0, 0.0], 0.0)?.complement();
    let verdict = classify_mp(&ctx, &domain);
    println!("half-space domain: {}", serde_json::to_string_pretty(&verdict).unwrap());
    Ok(())
}
