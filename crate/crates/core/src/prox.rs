//! Prox geometry: feasible sets, norms, Bregman divergences and the mirror step.
//!
//! Two setups are supported, one at each end of the `1 ≤ p ≤ 2` range:
//!
//! * Euclidean: `p = q = 2`, `d(x) = ½‖x − x⁰‖₂²` on a ball, a box or all of ℝⁿ.
//!   The mirror step is the Euclidean projection of `x − h·v`.
//! * Entropy: `p = 1`, `q = ∞`, `d(x) = Σ xᵢ ln xᵢ + ln n` on the probability
//!   simplex with the barycenter as prox center. The mirror step is the
//!   multiplicative-weights update.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::vector::{dist2, norm2};

/// Simplex coordinates are floored here before taking logarithms.
pub const SIMPLEX_FLOOR: f64 = 1e-300;

/// Tolerance used by [`FeasibleSet::contains`].
pub const MEMBERSHIP_TOL: f64 = 1e-12;

/// The dual exponent `q` of the norm pair, `1/p + 1/q = 1`, with `q ∈ [2, ∞]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DualExponent {
    Finite(f64),
    Infinity,
}

impl DualExponent {
    pub fn new(q: f64) -> Result<Self> {
        if q == f64::INFINITY {
            Ok(Self::Infinity)
        } else if q.is_finite() && q >= 2.0 {
            Ok(Self::Finite(q))
        } else {
            Err(Error::Config(format!("dual exponent q must lie in [2, inf], got {q}")))
        }
    }

    /// `2/q`, with `2/∞ = 0`.
    pub fn two_over_q(self) -> f64 {
        match self {
            Self::Finite(q) => 2.0 / q,
            Self::Infinity => 0.0,
        }
    }

    pub fn as_f64(self) -> f64 {
        match self {
            Self::Finite(q) => q,
            Self::Infinity => f64::INFINITY,
        }
    }
}

impl std::fmt::Display for DualExponent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Finite(q) => write!(f, "{q}"),
            Self::Infinity => f.write_str("inf"),
        }
    }
}

/// ℓ_q norm for `q ∈ [2, ∞]`.
pub fn dual_norm(v: &[f64], q: DualExponent) -> f64 {
    match q {
        DualExponent::Infinity => v.iter().fold(0.0, |m, x| m.max(x.abs())),
        DualExponent::Finite(q) if q == 2.0 => norm2(v),
        DualExponent::Finite(q) => {
            // scale by the max entry so large q does not overflow
            let scale = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
            if scale == 0.0 {
                return 0.0;
            }
            let s: f64 = v.iter().map(|x| libm::pow(x.abs() / scale, q)).sum();
            scale * libm::pow(s, 1.0 / q)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeasibleSet {
    EuclideanBall { center: Vec<f64>, radius: f64 },
    Box { lower: Vec<f64>, upper: Vec<f64> },
    Simplex { n: usize },
    /// All of ℝⁿ.
    Whole { n: usize },
}

impl FeasibleSet {
    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        if center.is_empty() {
            return Err(Error::Config("ball dimension must be at least 1".into()));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::Config(format!("ball radius must be positive, got {radius}")));
        }
        Ok(Self::EuclideanBall { center, radius })
    }

    pub fn unit_ball(n: usize) -> Result<Self> {
        Self::ball(vec![0.0; n], 1.0)
    }

    pub fn boxed(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        check_dim(lower.len(), upper.len())?;
        if lower.is_empty() {
            return Err(Error::Config("box dimension must be at least 1".into()));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l <= u)) {
            return Err(Error::Config("box requires lower <= upper coordinatewise".into()));
        }
        Ok(Self::Box { lower, upper })
    }

    pub fn simplex(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config("simplex dimension must be at least 1".into()));
        }
        Ok(Self::Simplex { n })
    }

    pub fn whole(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config("dimension must be at least 1".into()));
        }
        Ok(Self::Whole { n })
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::EuclideanBall { center, .. } => center.len(),
            Self::Box { lower, .. } => lower.len(),
            Self::Simplex { n } | Self::Whole { n } => *n,
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        if x.len() != self.dim() || x.iter().any(|v| !v.is_finite()) {
            return false;
        }
        let tol = MEMBERSHIP_TOL;
        match self {
            Self::EuclideanBall { center, radius } => dist2(x, center) <= radius + tol,
            Self::Box { lower, upper } => x
                .iter()
                .zip(lower.iter().zip(upper))
                .all(|(v, (l, u))| *v >= l - tol && *v <= u + tol),
            Self::Simplex { .. } => {
                x.iter().all(|v| *v >= -tol) && (x.iter().sum::<f64>() - 1.0).abs() <= tol
            }
            Self::Whole { .. } => true,
        }
    }

    /// Euclidean projection onto the set.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Self::EuclideanBall { center, radius } => {
                let d = dist2(x, center);
                if d <= *radius {
                    x.to_vec()
                } else {
                    let s = radius / d;
                    x.iter().zip(center).map(|(v, c)| c + s * (v - c)).collect()
                }
            }
            Self::Box { lower, upper } => x
                .iter()
                .zip(lower.iter().zip(upper))
                .map(|(v, (l, u))| v.clamp(*l, *u))
                .collect(),
            Self::Simplex { .. } => project_simplex(x),
            Self::Whole { .. } => x.to_vec(),
        }
    }

    /// Euclidean distance from `x` to the set.
    pub fn distance(&self, x: &[f64]) -> f64 {
        match self {
            Self::EuclideanBall { center, radius } => (dist2(x, center) - radius).max(0.0),
            Self::Whole { .. } => 0.0,
            _ => dist2(x, &self.project(x)),
        }
    }

    /// The natural prox center: ball center, box midpoint, simplex barycenter, origin.
    pub fn default_center(&self) -> Vec<f64> {
        match self {
            Self::EuclideanBall { center, .. } => center.clone(),
            Self::Box { lower, upper } => lower.iter().zip(upper).map(|(l, u)| 0.5 * (l + u)).collect(),
            Self::Simplex { n } => vec![1.0 / *n as f64; *n],
            Self::Whole { n } => vec![0.0; *n],
        }
    }
}

/// Sort-based Euclidean projection onto the probability simplex.
fn project_simplex(x: &[f64]) -> Vec<f64> {
    let mut sorted = x.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (j, v) in sorted.iter().enumerate() {
        cumulative += v;
        let candidate = (cumulative - 1.0) / (j + 1) as f64;
        if v - candidate > 0.0 {
            theta = candidate;
        }
    }
    x.iter().map(|v| (v - theta).max(0.0)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProxKind {
    Euclidean,
    Entropy,
}

/// A feasible set together with its prox-function and prox center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxSetup {
    set: FeasibleSet,
    kind: ProxKind,
    center: Vec<f64>,
}

impl ProxSetup {
    /// Euclidean prox on a ball, box or the whole space, centered at the
    /// set's default center.
    pub fn euclidean(set: FeasibleSet) -> Result<Self> {
        if matches!(set, FeasibleSet::Simplex { .. }) {
            return Err(Error::Config(
                "the simplex is paired with the entropy prox; use ProxSetup::entropy".into(),
            ));
        }
        let center = set.default_center();
        Ok(Self { set, kind: ProxKind::Euclidean, center })
    }

    /// Entropy prox on the `n`-simplex centered at the barycenter.
    pub fn entropy(n: usize) -> Result<Self> {
        let set = FeasibleSet::simplex(n)?;
        let center = set.default_center();
        Ok(Self { set, kind: ProxKind::Entropy, center })
    }

    /// Moves the prox center of a Euclidean setup. The entropy center is fixed
    /// at the barycenter so that `d(x⁰) = 0`.
    pub fn with_center(mut self, center: Vec<f64>) -> Result<Self> {
        check_dim(self.dim(), center.len())?;
        if self.kind == ProxKind::Entropy {
            return Err(Error::Config("the entropy prox center is the simplex barycenter".into()));
        }
        if !self.set.contains(&center) {
            return Err(Error::Config("prox center must be feasible".into()));
        }
        self.center = center;
        Ok(self)
    }

    pub fn set(&self) -> &FeasibleSet {
        &self.set
    }

    pub fn kind(&self) -> ProxKind {
        self.kind
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn dim(&self) -> usize {
        self.set.dim()
    }

    /// Primal norm exponent.
    pub fn p(&self) -> f64 {
        match self.kind {
            ProxKind::Euclidean => 2.0,
            ProxKind::Entropy => 1.0,
        }
    }

    pub fn q(&self) -> DualExponent {
        match self.kind {
            ProxKind::Euclidean => DualExponent::Finite(2.0),
            ProxKind::Entropy => DualExponent::Infinity,
        }
    }

    /// The primal norm ‖·‖_p.
    pub fn primal_norm(&self, v: &[f64]) -> f64 {
        match self.kind {
            ProxKind::Euclidean => norm2(v),
            ProxKind::Entropy => crate::vector::norm1(v),
        }
    }

    /// The prox-function `d`.
    pub fn prox_value(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        Ok(match self.kind {
            ProxKind::Euclidean => 0.5 * dist2(x, &self.center).powi(2),
            ProxKind::Entropy => {
                let n = x.len() as f64;
                x.iter().map(|&v| xlogx(v)).sum::<f64>() + libm::log(n)
            }
        })
    }
}

fn xlogx(v: f64) -> f64 {
    if v <= 0.0 {
        0.0
    } else {
        v * libm::log(v)
    }
}

/// Bregman divergence `V(x, z) = d(x) − d(z) − ⟨∇d(z), x − z⟩`.
pub fn bregman(setup: &ProxSetup, x: &[f64], z: &[f64]) -> Result<f64> {
    check_dim(setup.dim(), x.len())?;
    check_dim(setup.dim(), z.len())?;
    match setup.kind {
        ProxKind::Euclidean => Ok(0.5 * dist2(x, z).powi(2)),
        ProxKind::Entropy => {
            if let Some(i) = z.iter().position(|&v| !(v > 0.0)) {
                return Err(Error::ProxDomain(format!(
                    "entropy Bregman divergence needs a strictly positive second argument; coordinate {i} is {}",
                    z[i]
                )));
            }
            // Σ xᵢ ln(xᵢ/zᵢ) − Σ xᵢ + Σ zᵢ, which is KL(x‖z) on the simplex
            let mut total = 0.0;
            for (&xi, &zi) in x.iter().zip(z) {
                let kl_term = if xi > 0.0 { xi * (libm::log(xi) - libm::log(zi)) } else { 0.0 };
                total += kl_term - xi + zi;
            }
            Ok(total.max(0.0))
        }
    }
}

/// `R² = V(x*, x⁰)`.
pub fn initial_radius_sq(setup: &ProxSetup, x_star: &[f64]) -> Result<f64> {
    bregman(setup, x_star, setup.center())
}

/// One mirror-descent step: `argmin_{u ∈ Q} ⟨h·v, u − x⟩ + V(u, x)`.
pub fn mirror_step(setup: &ProxSetup, x: &[f64], v: &[f64], h: f64) -> Result<Vec<f64>> {
    check_dim(setup.dim(), x.len())?;
    check_dim(setup.dim(), v.len())?;
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Config(format!("step size must be positive and finite, got {h}")));
    }
    if v.iter().any(|g| !g.is_finite()) {
        return Err(Error::Config("mirror step direction has non-finite entries".into()));
    }
    match setup.kind {
        ProxKind::Euclidean => {
            let moved: Vec<f64> = x.iter().zip(v).map(|(xi, vi)| xi - h * vi).collect();
            Ok(setup.set.project(&moved))
        }
        ProxKind::Entropy => {
            let logits: Vec<f64> = x
                .iter()
                .zip(v)
                .map(|(&xi, &vi)| libm::log(xi.max(SIMPLEX_FLOOR)) - h * vi)
                .collect();
            let top = logits.iter().fold(f64::NEG_INFINITY, |m, &l| m.max(l));
            let weights: Vec<f64> = logits.iter().map(|&l| libm::exp(l - top)).collect();
            let total: f64 = weights.iter().sum();
            Ok(weights.iter().map(|w| (w / total).max(SIMPLEX_FLOOR)).collect())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn euclidean_bregman_examples() {
        let setup = ProxSetup::euclidean(FeasibleSet::unit_ball(2).unwrap()).unwrap();
        assert_eq!(bregman(&setup, &[0.3, 0.1], &[0.3, 0.1]).unwrap(), 0.0);
        assert_eq!(bregman(&setup, &[1.0, 0.0], &[0.0, 0.0]).unwrap(), 0.5);
    }

    #[test]
    fn entropy_bregman_is_kl() {
        let setup = ProxSetup::entropy(3).unwrap();
        let x = [1.0_f64 / 3.0; 3];
        let z = [0.5_f64, 0.3, 0.2];
        // Σ x ln(x/z) summed by hand
        let expected: f64 = x.iter().zip(&z).map(|(a, b)| a * (a / b).ln()).sum();
        let v = bregman(&setup, &x, &z).unwrap();
        assert!(close(v, expected, 1e-14));
        // mpmath, 30 digits
        assert!(close(v, 0.070_240_343_771_884_2, 1e-15));
    }

    #[test]
    fn entropy_bregman_rejects_zero_coordinate() {
        let setup = ProxSetup::entropy(2).unwrap();
        let err = bregman(&setup, &[0.5, 0.5], &[1.0, 0.0]).unwrap_err();
        assert!(matches!(err, Error::ProxDomain(_)));
    }

    #[test]
    fn dual_norm_examples() {
        assert_eq!(dual_norm(&[3.0, 4.0], DualExponent::Finite(2.0)), 5.0);
        assert_eq!(dual_norm(&[3.0, -4.0], DualExponent::Infinity), 4.0);
        let v = dual_norm(&[1.0; 4], DualExponent::Finite(4.0));
        assert!(close(v, 4f64.powf(0.25), 1e-14));
        assert!(close(v, 1.41421, 1e-5));
    }

    #[test]
    fn dual_exponent_rejects_q_below_two() {
        assert!(DualExponent::new(1.5).is_err());
        assert_eq!(DualExponent::new(f64::INFINITY).unwrap(), DualExponent::Infinity);
    }

    #[test]
    fn initial_radius_examples() {
        let eu = ProxSetup::euclidean(FeasibleSet::unit_ball(2).unwrap()).unwrap();
        assert_eq!(initial_radius_sq(&eu, &[0.0, 0.0]).unwrap(), 0.0);
        assert!(close(initial_radius_sq(&eu, &[0.6, 0.8]).unwrap(), 0.5, 1e-15));
        let ent = ProxSetup::entropy(2).unwrap();
        assert!(close(initial_radius_sq(&ent, &[1.0, 0.0]).unwrap(), 2f64.ln(), 1e-15));
        assert_eq!(initial_radius_sq(&ent, &[0.5, 0.5]).unwrap(), 0.0);
    }

    #[test]
    fn zero_direction_keeps_point() {
        let eu = ProxSetup::euclidean(FeasibleSet::unit_ball(2).unwrap()).unwrap();
        assert_eq!(mirror_step(&eu, &[0.2, -0.1], &[0.0, 0.0], 1.0).unwrap(), vec![0.2, -0.1]);
        let ent = ProxSetup::entropy(3).unwrap();
        let x = [0.2, 0.3, 0.5];
        let y = mirror_step(&ent, &x, &[0.0; 3], 1.0).unwrap();
        for (a, b) in x.iter().zip(&y) {
            assert!(close(*a, *b, 1e-15));
        }
    }

    #[test]
    fn ball_step_projects_onto_boundary() {
        let eu = ProxSetup::euclidean(FeasibleSet::unit_ball(2).unwrap()).unwrap();
        let y = mirror_step(&eu, &[0.0, 0.0], &[-3.0, 0.0], 1.0).unwrap();
        assert_eq!(y, vec![1.0, 0.0]);
    }

    #[test]
    fn entropy_step_closed_form() {
        let ent = ProxSetup::entropy(2).unwrap();
        let y = mirror_step(&ent, &[0.5, 0.5], &[2f64.ln(), 0.0], 1.0).unwrap();
        assert!(close(y[0], 1.0 / 3.0, 1e-15));
        assert!(close(y[1], 2.0 / 3.0, 1e-15));
    }

    #[test]
    fn entropy_step_survives_large_exponents() {
        let ent = ProxSetup::entropy(3).unwrap();
        let y = mirror_step(&ent, &[0.2, 0.3, 0.5], &[700.0, -700.0, 0.0], 1.0).unwrap();
        assert!(y.iter().all(|v| v.is_finite() && *v > 0.0));
        assert!(close(y.iter().sum::<f64>(), 1.0, 1e-12));
    }

    #[test]
    fn whole_space_step_is_plain_gradient_step() {
        let setup = ProxSetup::euclidean(FeasibleSet::whole(3).unwrap()).unwrap();
        let x = [0.1, -2.0, 5.0];
        let v = [1.5, 0.25, -3.0];
        let y = mirror_step(&setup, &x, &v, 0.3).unwrap();
        let expected: Vec<f64> = x.iter().zip(&v).map(|(a, b)| a - 0.3 * b).collect();
        assert_eq!(y, expected);
    }

    #[test]
    fn box_step_clamps() {
        let set = FeasibleSet::boxed(vec![-1.0, 0.0], vec![1.0, 2.0]).unwrap();
        let setup = ProxSetup::euclidean(set).unwrap();
        let y = mirror_step(&setup, &[0.0, 1.0], &[-5.0, 5.0], 1.0).unwrap();
        assert_eq!(y, vec![1.0, 0.0]);
    }

    #[test]
    fn simplex_projection_of_interior_point_is_identity() {
        let p = project_simplex(&[0.2, 0.3, 0.5]);
        assert!(close(p[0], 0.2, 1e-15) && close(p[2], 0.5, 1e-15));
        let q = project_simplex(&[2.0, 0.0, 0.0]);
        assert_eq!(q, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn setup_pairing_is_enforced() {
        assert!(ProxSetup::euclidean(FeasibleSet::simplex(3).unwrap()).is_err());
        assert!(ProxSetup::entropy(3).unwrap().with_center(vec![1.0, 0.0, 0.0]).is_err());
        let eu = ProxSetup::euclidean(FeasibleSet::unit_ball(2).unwrap()).unwrap();
        assert!(eu.clone().with_center(vec![2.0, 0.0]).is_err());
        assert!(eu.with_center(vec![0.5, 0.0]).is_ok());
    }

    #[test]
    fn prox_function_vanishes_at_center() {
        let ent = ProxSetup::entropy(5).unwrap();
        assert!(ent.prox_value(ent.center()).unwrap().abs() < 1e-15);
        assert!(ent.prox_value(&[1.0, 0.0, 0.0, 0.0, 0.0]).unwrap() >= 0.0);
    }
}
