//! Published mountain-car results for the same protocol (20 repetitions,
//! 10 bins), kept for side-by-side printing. The controller and assumption
//! region used here differ, so these are orientation points only.

use super::table::Target;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceRow {
    pub lambda: f64,
    pub name: &'static str,
    pub target: Target,
    /// `(mean, std)` for ECE, MCE, CCE, Brier, AuC.
    pub metrics: [(f64, f64); 5],
}

use Target::{Assumption as A, Safety as S};

const fn row(lambda: f64, name: &'static str, target: Target, metrics: [(f64, f64); 5]) -> ReferenceRow {
    ReferenceRow {
        lambda,
        name,
        target,
        metrics,
    }
}

pub const PUBLISHED: &[ReferenceRow] = &[
    row(0.5, "m1", A, [(0.021, 0.004), (0.157, 0.04), (0.152, 0.04), (0.043, 0.002), (0.987, 0.001)]),
    row(0.5, "m1", S, [(0.285, 0.01), (0.456, 0.02), (0.456, 0.02), (0.313, 0.01), (0.699, 0.01)]),
    row(0.5, "m2", A, [(0.157, 0.02), (0.322, 0.04), (0.278, 0.02), (0.225, 0.004), (0.764, 0.002)]),
    row(0.5, "m2", S, [(0.241, 0.02), (0.436, 0.01), (0.436, 0.01), (0.307, 0.004), (0.674, 0.007)]),
    row(0.5, "Product", A, [(0.087, 0.01), (0.207, 0.01), (0.207, 0.01), (0.132, 0.003), (0.887, 0.004)]),
    row(0.5, "Product", S, [(0.129, 0.007), (0.280, 0.04), (0.18, 0.01), (0.202, 0.004), (0.784, 0.007)]),
    row(0.5, "Weighted Avg.", A, [(0.349, 0.02), (0.659, 0.02), (0.659, 0.02), (0.266, 0.01), (0.811, 0.003)]),
    row(0.5, "Weighted Avg.", S, [(0.223, 0.01), (0.467, 0.02), (0.467, 0.02), (0.244, 0.006), (0.742, 0.004)]),
    row(0.5, "Power Product", A, [(0.092, 0.009), (0.210, 0.02), (0.204, 0.02), (0.132, 0.004), (0.887, 0.004)]),
    row(0.5, "Power Product", S, [(0.213, 0.01), (0.428, 0.05), (0.175, 0.01), (0.234, 0.008), (0.784, 0.007)]),
    row(0.5, "LogReg", A, [(0.049, 0.006), (0.245, 0.04), (0.108, 0.01), (0.13, 0.003), (0.867, 0.006)]),
    row(0.5, "LogReg", S, [(0.129, 0.02), (0.294, 0.03), (-0.018, 0.03), (0.212, 0.007), (0.764, 0.008)]),
    row(0.5, "Seq. Bayes", A, [(0.285, 0.02), (0.679, 0.07), (0.679, 0.07), (0.286, 0.02), (0.886, 0.02)]),
    row(0.5, "Seq. Bayes", S, [(0.328, 0.01), (0.572, 0.06), (0.572, 0.06), (0.331, 0.01), (0.76, 0.02)]),
    row(0.8, "m1", A, [(0.058, 0.006), (0.405, 0.03), (-0.002, 0.002), (0.057, 0.004), (0.987, 0.001)]),
    row(0.8, "m1", S, [(0.315, 0.009), (0.465, 0.01), (0.465, 0.01), (0.329, 0.009), (0.693, 0.01)]),
    row(0.8, "m2", A, [(0.195, 0.008), (0.548, 0.07), (0.241, 0.009), (0.236, 0.002), (0.764, 0.002)]),
    row(0.8, "m2", S, [(0.274, 0.008), (0.475, 0.05), (0.437, 0.01), (0.316, 0.005), (0.67, 0.007)]),
    row(0.8, "Product", A, [(0.102, 0.008), (0.231, 0.02), (0.203, 0.009), (0.137, 0.004), (0.881, 0.004)]),
    row(0.8, "Product", S, [(0.223, 0.008), (0.486, 0.04), (0.176, 0.008), (0.242, 0.006), (0.779, 0.008)]),
    row(0.8, "Weighted Avg.", A, [(0.229, 0.008), (0.363, 0.009), (0.363, 0.009), (0.197, 0.002), (0.826, 0.01)]),
    row(0.8, "Weighted Avg.", S, [(0.172, 0.006), (0.308, 0.04), (0.228, 0.01), (0.22, 0.003), (0.749, 0.01)]),
    row(0.8, "Power Product", A, [(0.151, 0.006), (0.431, 0.04), (0.197, 0.01), (0.157, 0.005), (0.881, 0.004)]),
    row(0.8, "Power Product", S, [(0.273, 0.007), (0.614, 0.02), (0.169, 0.009), (0.276, 0.006), (0.779, 0.008)]),
    row(0.8, "LogReg", A, [(0.144, 0.01), (0.447, 0.02), (-0.059, 0.008), (0.16, 0.006), (0.868, 0.005)]),
    row(0.8, "LogReg", S, [(0.276, 0.009), (0.481, 0.02), (-0.237, 0.01), (0.275, 0.007), (0.761, 0.008)]),
];

pub fn published(lambda: f64, name: &str, target: Target) -> Option<&'static ReferenceRow> {
    PUBLISHED
        .iter()
        .find(|r| (r.lambda - lambda).abs() < 1e-9 && r.name == name && r.target == target)
}
