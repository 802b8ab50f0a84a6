//! Stochastic test problems with closed-form means, and the bounded
//! non-random noise layer that turns `f(x, ξ)` into the observable
//! `f̃(x, ξ) = f(x, ξ) + δ(x, ξ)`.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::prox::FeasibleSet;
use crate::vector::{dot, norm1, norm2, sub};

/// Distribution of the stochastic realization ξ. Every law is symmetric, so
/// ξ has zero mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum XiLaw {
    Degenerate,
    /// `±scale` with equal probability.
    Rademacher { scale: f64 },
    Gaussian { std: f64 },
    Uniform { half_width: f64 },
}

impl XiLaw {
    fn validate(&self) -> Result<()> {
        let width = match *self {
            Self::Degenerate => return Ok(()),
            Self::Rademacher { scale } => scale,
            Self::Gaussian { std } => std,
            Self::Uniform { half_width } => half_width,
        };
        if width >= 0.0 && width.is_finite() {
            Ok(())
        } else {
            Err(Error::Config(format!("xi law scale must be finite and nonnegative, got {width}")))
        }
    }
}

/// An opaque realization token. The solver hands the same token to both
/// probes of one two-point pair and never looks inside.
#[derive(Debug, Clone, PartialEq)]
pub struct Xi(Vec<f64>);

impl Xi {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    /// First coordinate, or zero for an empty token.
    pub fn scalar(&self) -> f64 {
        self.0.first().copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Objective {
    /// `M‖x − x* − ξ·u‖₂`
    L2Distance { x_star: Vec<f64>, direction: Vec<f64> },
    /// `M/n · ‖x − x*‖₁ + ξ`
    L1Weighted { x_star: Vec<f64> },
    /// `max_j ⟨a_j, x − anchor⟩ + b_j + ξ`
    MaxAffine { rows: Vec<Vec<f64>>, offsets: Vec<f64>, anchor: Vec<f64> },
    /// `γ/2 · ‖x − x*‖₂² + ⟨ξ, x⟩`
    Quadratic { x_star: Vec<f64>, gamma: f64 },
}

/// Names accepted by [`builtin_problem`].
pub const BUILTIN_NAMES: [&str; 4] =
    ["l2_distance", "l1_weighted", "max_affine", "strongly_convex_quadratic"];

#[derive(Debug, Clone, PartialEq)]
pub struct StochasticProblem {
    name: String,
    dim: usize,
    objective: Objective,
    law: XiLaw,
    lipschitz: f64,
    minimizer_known: bool,
}

/// Builds one of the built-in problems with its default minimizer and ξ law.
///
/// | name | realization | default x* | default ξ |
/// |------|-------------|------------|-----------|
/// | `l2_distance` | `M‖x − x* − ξu‖₂`, `u = 𝟙/√n` | `0.5·𝟙/√n` | ±0.1 |
/// | `l1_weighted` | `M/n·‖x − x*‖₁ + ξ` | `e₁` (simplex vertex) | N(0, 0.1²) |
/// | `max_affine` | `M·‖x − x*‖_∞ + ξ` as a max of `2n` planes | `0.5·𝟙/√n` | N(0, 0.1²) |
/// | `strongly_convex_quadratic` | `γ/2‖x − x*‖₂² + ⟨ξ, x⟩` | `0.5·𝟙/√n` | ±M/(4√n) per coordinate |
///
/// For the quadratic, `M` is the gradient bound on the unit ball around the
/// origin, which holds for the defaults whenever `M ≥ 2γ`.
pub fn builtin_problem(name: &str, n: usize, lipschitz: f64, gamma: Option<f64>) -> Result<StochasticProblem> {
    if n == 0 {
        return Err(Error::Config("problem dimension must be at least 1".into()));
    }
    if !(lipschitz > 0.0 && lipschitz.is_finite()) {
        return Err(Error::Config(format!("Lipschitz constant must be positive, got {lipschitz}")));
    }
    let centered = vec![0.5 / (n as f64).sqrt(); n];
    match name {
        "l2_distance" => {
            StochasticProblem::l2_distance(centered, lipschitz, XiLaw::Rademacher { scale: 0.1 })
        }
        "l1_weighted" => {
            let mut vertex = vec![0.0; n];
            vertex[0] = 1.0;
            StochasticProblem::l1_weighted(vertex, lipschitz, XiLaw::Gaussian { std: 0.1 })
        }
        "max_affine" => {
            let mut rows = Vec::with_capacity(2 * n);
            for i in 0..n {
                for sign in [1.0, -1.0] {
                    let mut row = vec![0.0; n];
                    row[i] = sign * lipschitz;
                    rows.push(row);
                }
            }
            let offsets = vec![0.0; 2 * n];
            let mut p = StochasticProblem::max_affine(rows, offsets, XiLaw::Gaussian { std: 0.1 })?;
            p.set_minimizer(centered)?;
            p.name = name.into();
            Ok(p)
        }
        "strongly_convex_quadratic" => {
            let gamma = gamma.ok_or_else(|| {
                Error::Config("strongly_convex_quadratic needs a strong convexity constant gamma".into())
            })?;
            if lipschitz < 2.0 * gamma {
                return Err(Error::Config(format!(
                    "strongly_convex_quadratic needs M >= 2 gamma for the gradient bound to hold on the unit ball (M = {lipschitz}, gamma = {gamma})"
                )));
            }
            let scale = lipschitz / (4.0 * (n as f64).sqrt());
            StochasticProblem::quadratic(centered, gamma, lipschitz, XiLaw::Rademacher { scale })
        }
        other => Err(Error::Config(format!(
            "unknown problem '{other}' (expected one of {})",
            BUILTIN_NAMES.join(", ")
        ))),
    }
}

impl StochasticProblem {
    pub fn l2_distance(x_star: Vec<f64>, lipschitz: f64, law: XiLaw) -> Result<Self> {
        law.validate()?;
        if !matches!(law, XiLaw::Degenerate | XiLaw::Rademacher { .. }) {
            return Err(Error::Config(
                "l2_distance has a closed-form mean only for degenerate or rademacher xi".into(),
            ));
        }
        let n = x_star.len();
        let direction = vec![1.0 / (n as f64).sqrt(); n];
        Ok(Self {
            name: "l2_distance".into(),
            dim: n,
            objective: Objective::L2Distance { x_star, direction },
            law,
            lipschitz,
            minimizer_known: true,
        })
    }

    pub fn l1_weighted(x_star: Vec<f64>, lipschitz: f64, law: XiLaw) -> Result<Self> {
        law.validate()?;
        Ok(Self {
            name: "l1_weighted".into(),
            dim: x_star.len(),
            objective: Objective::L1Weighted { x_star },
            law,
            lipschitz,
            minimizer_known: true,
        })
    }

    /// `max_j ⟨a_j, x⟩ + b_j + ξ`. The Lipschitz constant is `max_j ‖a_j‖₂`;
    /// the minimizer is unknown unless set with [`Self::with_minimizer`].
    pub fn max_affine(rows: Vec<Vec<f64>>, offsets: Vec<f64>, law: XiLaw) -> Result<Self> {
        law.validate()?;
        let n = rows.first().map(Vec::len).unwrap_or(0);
        if n == 0 || rows.len() != offsets.len() {
            return Err(Error::Config("max_affine needs at least one row and one offset per row".into()));
        }
        for row in &rows {
            check_dim(n, row.len())?;
        }
        let lipschitz = rows.iter().map(|r| norm2(r)).fold(0.0, f64::max);
        Ok(Self {
            name: "max_affine".into(),
            dim: n,
            objective: Objective::MaxAffine { rows, offsets, anchor: vec![0.0; n] },
            law,
            lipschitz,
            minimizer_known: false,
        })
    }

    /// Linear function `⟨a, x⟩ + b + ξ`.
    pub fn linear(a: Vec<f64>, b: f64, law: XiLaw) -> Result<Self> {
        let mut p = Self::max_affine(vec![a], vec![b], law)?;
        p.name = "linear".into();
        Ok(p)
    }

    /// Constant function `c + ξ`, with Lipschitz constant 0.
    pub fn constant(n: usize, c: f64) -> Result<Self> {
        let mut p = Self::max_affine(vec![vec![0.0; n]], vec![c], XiLaw::Degenerate)?;
        p.name = "constant".into();
        Ok(p)
    }

    pub fn quadratic(x_star: Vec<f64>, gamma: f64, lipschitz: f64, law: XiLaw) -> Result<Self> {
        law.validate()?;
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::Config(format!("gamma must be positive, got {gamma}")));
        }
        Ok(Self {
            name: "strongly_convex_quadratic".into(),
            dim: x_star.len(),
            objective: Objective::Quadratic { x_star, gamma },
            law,
            lipschitz,
            minimizer_known: true,
        })
    }

    pub fn with_law(mut self, law: XiLaw) -> Result<Self> {
        law.validate()?;
        if matches!(self.objective, Objective::L2Distance { .. })
            && !matches!(law, XiLaw::Degenerate | XiLaw::Rademacher { .. })
        {
            return Err(Error::Config(
                "l2_distance has a closed-form mean only for degenerate or rademacher xi".into(),
            ));
        }
        self.law = law;
        Ok(self)
    }

    /// Moves the minimizer. For `max_affine` this re-anchors the planes at
    /// `x_star`, which is the minimizer only when the planes surround the
    /// origin (as in the built-in).
    pub fn with_minimizer(mut self, x_star: Vec<f64>) -> Result<Self> {
        self.set_minimizer(x_star)?;
        Ok(self)
    }

    fn set_minimizer(&mut self, point: Vec<f64>) -> Result<()> {
        check_dim(self.dim, point.len())?;
        match &mut self.objective {
            Objective::L2Distance { x_star, .. }
            | Objective::L1Weighted { x_star }
            | Objective::Quadratic { x_star, .. } => *x_star = point,
            Objective::MaxAffine { anchor, .. } => {
                *anchor = point;
                self.minimizer_known = true;
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn law(&self) -> XiLaw {
        self.law
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn strong_convexity(&self) -> Option<f64> {
        match self.objective {
            Objective::Quadratic { gamma, .. } => Some(gamma),
            _ => None,
        }
    }

    /// The known minimizer `x*` of `F` over all of ℝⁿ.
    pub fn minimizer(&self) -> Option<&[f64]> {
        if !self.minimizer_known {
            return None;
        }
        Some(match &self.objective {
            Objective::L2Distance { x_star, .. }
            | Objective::L1Weighted { x_star }
            | Objective::Quadratic { x_star, .. } => x_star,
            Objective::MaxAffine { anchor, .. } => anchor,
        })
    }

    /// `F* = F(x*)`, valid as the constrained optimum whenever `x*` is feasible.
    pub fn optimal_value(&self) -> Option<f64> {
        self.minimizer().map(|x| self.exact_mean(x))
    }

    /// Length of a ξ token for this problem.
    pub fn xi_len(&self) -> usize {
        match self.objective {
            Objective::Quadratic { .. } => self.dim,
            _ => 1,
        }
    }

    /// One realization `f(x, ξ)`. Defined on all of ℝⁿ.
    pub fn realize(&self, x: &[f64], xi: &Xi) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        let m = self.lipschitz;
        match &self.objective {
            Objective::L2Distance { x_star, direction } => {
                let s = xi.scalar();
                let sq: f64 = x
                    .iter()
                    .zip(x_star)
                    .zip(direction)
                    .map(|((xi_, c), u)| {
                        let d = xi_ - c - s * u;
                        d * d
                    })
                    .sum();
                m * sq.sqrt()
            }
            Objective::L1Weighted { x_star } => {
                m / self.dim as f64 * norm1(&sub(x, x_star)) + xi.scalar()
            }
            Objective::MaxAffine { rows, offsets, anchor } => {
                max_plane(rows, offsets, anchor, x).0 + xi.scalar()
            }
            Objective::Quadratic { x_star, gamma } => {
                let d = sub(x, x_star);
                0.5 * gamma * dot(&d, &d) + dot(xi.values(), x)
            }
        }
    }

    /// Closed-form `F(x) = E_ξ f(x, ξ)`.
    pub fn exact_mean(&self, x: &[f64]) -> f64 {
        let m = self.lipschitz;
        match &self.objective {
            Objective::L2Distance { x_star, direction } => {
                let d = sub(x, x_star);
                match self.law {
                    XiLaw::Rademacher { scale } => {
                        let plus: Vec<f64> = d.iter().zip(direction).map(|(a, u)| a - scale * u).collect();
                        let minus: Vec<f64> = d.iter().zip(direction).map(|(a, u)| a + scale * u).collect();
                        0.5 * m * (norm2(&plus) + norm2(&minus))
                    }
                    _ => m * norm2(&d),
                }
            }
            Objective::L1Weighted { x_star } => m / self.dim as f64 * norm1(&sub(x, x_star)),
            Objective::MaxAffine { rows, offsets, anchor } => max_plane(rows, offsets, anchor, x).0,
            Objective::Quadratic { x_star, gamma } => {
                let d = sub(x, x_star);
                0.5 * gamma * dot(&d, &d)
            }
        }
    }

    /// A subgradient of `F` at `x`, used as the exact-gradient source when
    /// checking the mirror-descent loop in isolation.
    pub fn mean_subgradient(&self, x: &[f64]) -> Vec<f64> {
        let m = self.lipschitz;
        match &self.objective {
            Objective::L2Distance { x_star, direction } => {
                let d = sub(x, x_star);
                let unit = |v: Vec<f64>| {
                    let nrm = norm2(&v);
                    if nrm > 0.0 {
                        v.iter().map(|a| a / nrm).collect()
                    } else {
                        vec![0.0; v.len()]
                    }
                };
                match self.law {
                    XiLaw::Rademacher { scale } => {
                        let a = unit(d.iter().zip(direction).map(|(a, u)| a - scale * u).collect());
                        let b = unit(d.iter().zip(direction).map(|(a, u)| a + scale * u).collect());
                        a.iter().zip(&b).map(|(p, q)| 0.5 * m * (p + q)).collect()
                    }
                    _ => unit(d).iter().map(|a| m * a).collect(),
                }
            }
            Objective::L1Weighted { x_star } => {
                let w = m / self.dim as f64;
                x.iter()
                    .zip(x_star)
                    .map(|(a, b)| if a > b { w } else if a < b { -w } else { 0.0 })
                    .collect()
            }
            Objective::MaxAffine { rows, offsets, anchor } => {
                rows[max_plane(rows, offsets, anchor, x).1].clone()
            }
            Objective::Quadratic { x_star, gamma } => sub(x, x_star).iter().map(|d| gamma * d).collect(),
        }
    }

    /// Closed-form gradient of the doubly smoothed objective `F^{τ,μ}`, where
    /// one exists independent of the radii: the quadratic (smoothing adds a
    /// constant) and a single plane (smoothing is exact).
    pub fn smoothed_gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        match &self.objective {
            Objective::Quadratic { x_star, gamma } => Some(sub(x, x_star).iter().map(|d| gamma * d).collect()),
            Objective::MaxAffine { rows, .. } if rows.len() == 1 => Some(rows[0].clone()),
            _ => None,
        }
    }
}

fn max_plane(rows: &[Vec<f64>], offsets: &[f64], anchor: &[f64], x: &[f64]) -> (f64, usize) {
    let shifted = sub(x, anchor);
    rows.iter()
        .zip(offsets)
        .map(|(a, b)| dot(a, &shifted) + b)
        .enumerate()
        .fold((f64::NEG_INFINITY, 0), |(best, arg), (j, v)| if v > best { (v, j) } else { (best, arg) })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    None,
    ConstantPlus,
    Uniform,
    AdversarialAlign,
}

/// Which probe of a two-point pair is being observed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbeRole {
    /// `x + τe₁ + μe₂`
    Shifted,
    /// `x + τe₁`
    Base,
}

/// Evaluation metadata available to the noise layer.
#[derive(Debug, Clone, Copy)]
pub struct EvalContext<'a> {
    pub role: ProbeRole,
    /// The current iterate `x^k`.
    pub center: Option<&'a [f64]>,
    /// The inner smoothing direction `e₂`.
    pub direction: Option<&'a [f64]>,
}

impl<'a> EvalContext<'a> {
    /// A single observation outside any two-point pair.
    pub fn single() -> Self {
        Self { role: ProbeRole::Base, center: None, direction: None }
    }

    pub fn pair(role: ProbeRole, center: &'a [f64], direction: &'a [f64]) -> Self {
        Self { role, center: Some(center), direction: Some(direction) }
    }
}

/// Bounded non-random noise `δ(x, ξ)` with `|δ(x, ξ)| ≤ bound`.
///
/// * `none`: `δ = 0`.
/// * `constant_plus`: `δ = +bound`.
/// * `uniform`: a deterministic hash of the probe point, ξ and the probe role
///   spread over `[−bound, bound]`.
/// * `adversarial_align`: `+s·bound` at the shifted probe and `−s·bound` at the
///   base probe, where `s = −sign⟨e₂, x^k − anchor⟩` (and `s = +1` when the
///   context or the anchor is missing). The resulting estimator bias points
///   away from the anchor, which the solver defaults to the known minimizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    kind: NoiseKind,
    bound: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    anchor: Option<Vec<f64>>,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self::none()
    }
}

impl NoiseModel {
    pub fn none() -> Self {
        Self { kind: NoiseKind::None, bound: 0.0, anchor: None }
    }

    pub fn new(kind: NoiseKind, bound: f64) -> Result<Self> {
        if !(bound >= 0.0 && bound.is_finite()) {
            return Err(Error::Config(format!("noise bound must be finite and nonnegative, got {bound}")));
        }
        let bound = if kind == NoiseKind::None { 0.0 } else { bound };
        Ok(Self { kind, bound, anchor: None })
    }

    pub fn with_anchor(mut self, anchor: Vec<f64>) -> Self {
        self.anchor = Some(anchor);
        self
    }

    pub fn kind(&self) -> NoiseKind {
        self.kind
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn anchor(&self) -> Option<&[f64]> {
        self.anchor.as_deref()
    }

    /// `δ(x, ξ)` for one probe, always clamped to `[−bound, bound]`.
    pub fn offset(&self, x: &[f64], xi: &Xi, ctx: &EvalContext<'_>) -> f64 {
        let raw = match self.kind {
            NoiseKind::None => 0.0,
            NoiseKind::ConstantPlus => self.bound,
            NoiseKind::Uniform => self.bound * (2.0 * hash_unit(x, xi, ctx.role) - 1.0),
            NoiseKind::AdversarialAlign => {
                let s = self.alignment_sign(ctx);
                match ctx.role {
                    ProbeRole::Shifted => s * self.bound,
                    ProbeRole::Base => -s * self.bound,
                }
            }
        };
        raw.clamp(-self.bound, self.bound)
    }

    fn alignment_sign(&self, ctx: &EvalContext<'_>) -> f64 {
        match (ctx.center, ctx.direction, self.anchor.as_deref()) {
            (Some(center), Some(dir), Some(anchor)) => {
                let along: f64 = dir.iter().zip(center.iter().zip(anchor)).map(|(e, (c, a))| e * (c - a)).sum();
                if along > 0.0 {
                    -1.0
                } else {
                    1.0
                }
            }
            _ => 1.0,
        }
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn hash_unit(x: &[f64], xi: &Xi, role: ProbeRole) -> f64 {
    let mut h = splitmix(role as u64 + 1);
    for v in x.iter().chain(xi.values()) {
        h = splitmix(h ^ v.to_bits());
    }
    (h >> 11) as f64 / (1u64 << 53) as f64
}

/// The set on which probes are allowed: a feasible set widened by `margin`
/// (the `ε/M`-neighborhood).
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedDomain {
    pub set: FeasibleSet,
    pub margin: f64,
}

impl ExtendedDomain {
    pub fn check(&self, x: &[f64]) -> Result<()> {
        let distance = self.set.distance(x);
        if distance <= self.margin * (1.0 + 1e-9) + 1e-12 {
            Ok(())
        } else {
            Err(Error::ProbeOutOfDomain { point: x.to_vec(), distance, margin: self.margin, tau: None, mu: None })
        }
    }
}

/// A problem seen through the noise layer.
#[derive(Debug, Clone, Copy)]
pub struct NoisyOracle<'a> {
    pub problem: &'a StochasticProblem,
    pub noise: &'a NoiseModel,
    pub domain: Option<&'a ExtendedDomain>,
}

impl<'a> NoisyOracle<'a> {
    pub fn new(problem: &'a StochasticProblem, noise: &'a NoiseModel) -> Self {
        Self { problem, noise, domain: None }
    }

    pub fn with_domain(mut self, domain: &'a ExtendedDomain) -> Self {
        self.domain = Some(domain);
        self
    }

    /// `f̃(x, ξ) = f(x, ξ) + δ(x, ξ)`.
    pub fn observe(&self, x: &[f64], xi: &Xi, ctx: &EvalContext<'_>) -> Result<f64> {
        check_dim(self.problem.dim(), x.len())?;
        if let Some(domain) = self.domain {
            domain.check(x)?;
        }
        Ok(self.problem.realize(x, xi) + self.noise.offset(x, xi, ctx))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{sample_ball, sample_xi, RandomStream};
    use crate::vector::MeanAccumulator;

    fn all_builtins(n: usize) -> Vec<StochasticProblem> {
        BUILTIN_NAMES
            .iter()
            .map(|name| builtin_problem(name, n, 2.0, Some(1.0)).unwrap())
            .collect()
    }

    #[test]
    fn l2_distance_vanishes_at_minimizer_without_noise() {
        let p = builtin_problem("l2_distance", 3, 1.0, None).unwrap();
        let x = p.minimizer().unwrap().to_vec();
        assert_eq!(p.realize(&x, &Xi::new(vec![0.0])), 0.0);
    }

    #[test]
    fn max_affine_two_planes() {
        let p = StochasticProblem::max_affine(
            vec![vec![1.0, 0.0], vec![-1.0, 0.0]],
            vec![0.0, 0.0],
            XiLaw::Degenerate,
        )
        .unwrap();
        assert_eq!(p.realize(&[0.3, 0.7], &Xi::new(vec![0.0])), 0.3);
        assert_eq!(p.lipschitz(), 1.0);
        assert!(p.minimizer().is_none());
    }

    #[test]
    fn l2_distance_mean_is_two_point_mixture() {
        let s = 0.3;
        let p = StochasticProblem::l2_distance(vec![0.1, -0.2], 1.5, XiLaw::Rademacher { scale: s }).unwrap();
        let x = [0.7, 0.4];
        let u = [1.0 / 2f64.sqrt(); 2];
        let d = [x[0] - 0.1, x[1] + 0.2];
        let plus = ((d[0] - s * u[0]).powi(2) + (d[1] - s * u[1]).powi(2)).sqrt();
        let minus = ((d[0] + s * u[0]).powi(2) + (d[1] + s * u[1]).powi(2)).sqrt();
        let expected = 0.5 * 1.5 * (plus + minus);
        assert!((p.exact_mean(&x) - expected).abs() < 1e-15);

        let mut stream = RandomStream::new(4, 1);
        let mut acc = MeanAccumulator::default();
        for _ in 0..100_000 {
            acc.push(p.realize(&x, &sample_xi(&p.law(), 1, &mut stream)));
        }
        assert!((acc.mean() - expected).abs() <= 3.0 * acc.std_err());
    }

    #[test]
    fn unknown_problem_is_config_error() {
        let err = builtin_problem("rosenbrock", 3, 1.0, None).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn quadratic_needs_gamma_and_enough_lipschitz() {
        assert!(builtin_problem("strongly_convex_quadratic", 3, 2.0, None).is_err());
        assert!(builtin_problem("strongly_convex_quadratic", 3, 1.0, Some(1.0)).is_err());
        assert!(builtin_problem("strongly_convex_quadratic", 3, 2.0, Some(1.0)).is_ok());
    }

    #[test]
    fn lipschitz_probe_on_builtins() {
        let n = 5;
        let mut stream = RandomStream::new(21, 9);
        for p in all_builtins(n) {
            for _ in 0..10_000 {
                // the quadratic's M is a bound on the unit ball; the rest are global
                let x = sample_ball(n, &mut stream);
                let y = sample_ball(n, &mut stream);
                let xi = sample_xi(&p.law(), p.xi_len(), &mut stream);
                let lhs = (p.realize(&y, &xi) - p.realize(&x, &xi)).abs();
                let rhs = p.lipschitz() * crate::vector::dist2(&x, &y);
                assert!(lhs <= rhs * (1.0 + 1e-9), "{}: {lhs} > {rhs}", p.name());
            }
        }
    }

    #[test]
    fn exact_mean_matches_monte_carlo() {
        let n = 4;
        let mut points = RandomStream::new(31, 9);
        let mut draws = RandomStream::new(32, 1);
        for p in all_builtins(n) {
            for _ in 0..20 {
                let x = sample_ball(n, &mut points);
                let mut acc = MeanAccumulator::default();
                for _ in 0..100_000 {
                    acc.push(p.realize(&x, &sample_xi(&p.law(), p.xi_len(), &mut draws)));
                }
                let err = (acc.mean() - p.exact_mean(&x)).abs();
                // 80 comparisons, so 4.5 SE instead of 3; degenerate spread has zero SE
                assert!(err <= 4.5 * acc.std_err() + 1e-12, "{}: err {err} se {}", p.name(), acc.std_err());
            }
        }
    }

    #[test]
    fn minimizers_attain_optimal_values() {
        for p in all_builtins(6) {
            let x = p.minimizer().unwrap();
            let f_star = p.optimal_value().unwrap();
            assert_eq!(p.exact_mean(x), f_star);
            let g = p.mean_subgradient(x);
            assert_eq!(g.len(), 6);
        }
    }

    #[test]
    fn noise_kinds() {
        let p = builtin_problem("l2_distance", 2, 1.0, None).unwrap();
        let xi = Xi::new(vec![0.1]);
        let x = [0.2, 0.9];
        let f = p.realize(&x, &xi);
        let none = NoiseModel::none();
        assert_eq!(NoisyOracle::new(&p, &none).observe(&x, &xi, &EvalContext::single()).unwrap(), f);

        let plus = NoiseModel::new(NoiseKind::ConstantPlus, 0.01).unwrap();
        let v = NoisyOracle::new(&p, &plus).observe(&x, &xi, &EvalContext::single()).unwrap();
        assert!((v - f - 0.01).abs() < 1e-15);
    }

    #[test]
    fn adversarial_pair_gets_opposite_offsets() {
        let noise = NoiseModel::new(NoiseKind::AdversarialAlign, 0.01).unwrap();
        let xi = Xi::new(vec![0.0]);
        let center = [0.0, 0.0];
        let e2 = [1.0, 0.0];
        let shifted = noise.offset(&[0.1, 0.0], &xi, &EvalContext::pair(ProbeRole::Shifted, &center, &e2));
        let base = noise.offset(&[0.0, 0.0], &xi, &EvalContext::pair(ProbeRole::Base, &center, &e2));
        assert_eq!((shifted, base), (0.01, -0.01));

        // with an anchor behind the direction of travel the pair flips sign
        let anchored = noise.clone().with_anchor(vec![-1.0, 0.0]);
        let shifted = anchored.offset(&[0.1, 0.0], &xi, &EvalContext::pair(ProbeRole::Shifted, &center, &e2));
        let base = anchored.offset(&[0.0, 0.0], &xi, &EvalContext::pair(ProbeRole::Base, &center, &e2));
        assert_eq!((shifted, base), (-0.01, 0.01));
    }

    #[test]
    fn uniform_noise_is_bounded_and_deterministic() {
        let noise = NoiseModel::new(NoiseKind::Uniform, 0.05).unwrap();
        let mut stream = RandomStream::new(1, 1);
        let mut acc = MeanAccumulator::default();
        for _ in 0..10_000 {
            let x = sample_ball(3, &mut stream);
            let xi = Xi::new(vec![stream.standard_normal()]);
            let a = noise.offset(&x, &xi, &EvalContext::single());
            let b = noise.offset(&x, &xi, &EvalContext::single());
            assert_eq!(a.to_bits(), b.to_bits());
            assert!(a.abs() <= 0.05);
            acc.push(a);
        }
        // roughly centered spread over the interval
        assert!(acc.mean().abs() < 0.005);
        assert!(acc.variance() > 0.0005);
    }

    #[test]
    fn domain_guard_rejects_far_probes() {
        let p = builtin_problem("l2_distance", 2, 1.0, None).unwrap();
        let noise = NoiseModel::none();
        let domain = ExtendedDomain { set: FeasibleSet::unit_ball(2).unwrap(), margin: 0.1 };
        let oracle = NoisyOracle::new(&p, &noise).with_domain(&domain);
        let xi = Xi::new(vec![0.0]);
        assert!(oracle.observe(&[1.05, 0.0], &xi, &EvalContext::single()).is_ok());
        let err = oracle.observe(&[1.5, 0.0], &xi, &EvalContext::single()).unwrap_err();
        assert!(matches!(err, Error::ProbeOutOfDomain { .. }));
    }
}
