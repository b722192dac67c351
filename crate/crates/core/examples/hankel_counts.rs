//! Hankel data volume of the two predictor forms as the horizon grows.

use ddpce::hankel::{asymptotic_count_ratio, count_nonzero_entries, CountConvention, HankelDims, PredictorForm};

fn main() {
    println!("   N       joint   shortened   shortened (full window)   ratio");
    for n in [5, 10, 25, 50, 100, 1000] {
        let d = HankelDims { n_u: 1, n_y: 3, n_w: 3, lag: 2, horizon: n, basis_len: 1 + 3 * n, n_g: 79 };
        let joint = count_nonzero_entries(PredictorForm::Joint, &d, CountConvention::AssembledBlocks);
        let short = count_nonzero_entries(PredictorForm::Shortened, &d, CountConvention::AssembledBlocks);
        let full = count_nonzero_entries(PredictorForm::Shortened, &d, CountConvention::FullInitWindow);
        println!("{n:4} {joint:11} {short:11} {full:25} {:7.4}", short as f64 / joint as f64);
    }
    println!("limit {:.4}", asymptotic_count_ratio(1, 3));
}
