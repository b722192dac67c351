//! Estimates disturbance realizations from a disturbed record and
//! synthesizes an undisturbed trajectory near the origin.

use ddpce::aircraft;
use ddpce::closed_loop::{synthesize_scheme_iii, DataSettings};
use ddpce::linalg::spectral_radius;

fn main() -> ddpce::Result<()> {
    let model = aircraft::varx();
    let spec = aircraft::disturbance_spec();
    let settings = DataSettings::default();
    let art = synthesize_scheme_iii(&model, &spec, &settings, 3)?;

    let est = &art.estimate;
    println!("record: {} samples, {} disturbance estimates from time {}", art.record.len(), est.w.len(), est.start);
    let identified = est.model(model.n_u())?;
    println!("max |Theta_hat - Theta| = {:.3e}", (est.theta.clone() - model.theta()).amax());
    let (f, _, _) = identified.companion();
    println!("open-loop spectral radius of the identified model: {:.3}", spectral_radius(&f));
    println!("feedback gain used for synthesis: {:.3?}", art.data.feedback.as_slice());

    let syn = &art.data.data;
    let peak = syn.y.iter().map(|y| y.amax()).fold(0.0, f64::max);
    println!("synthesized {} undisturbed samples, peak |y| = {peak:.3}", syn.len());
    println!("condition number of the synthesis stack: {:.3e}", art.data.condition_number);
    Ok(())
}
