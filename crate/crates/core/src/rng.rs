//! Seeded random sources for the stochastic realization ξ and the two
//! smoothing directions.
//!
//! Every stream is a ChaCha8 generator keyed by `(seed, stream_id)`, so a run
//! owns one independent stream per role and replays bit-for-bit on any
//! platform. Transcendental functions go through `libm` for the same reason.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::oracle::{Xi, XiLaw};

/// The role a stream plays inside one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamRole {
    Xi,
    Ball,
    Sphere,
}

/// Stream ids used for the three roles of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamIds {
    pub xi: u64,
    pub ball: u64,
    pub sphere: u64,
}

impl Default for StreamIds {
    fn default() -> Self {
        Self { xi: 1, ball: 2, sphere: 3 }
    }
}

impl StreamIds {
    pub fn id(&self, role: StreamRole) -> u64 {
        match role {
            StreamRole::Xi => self.xi,
            StreamRole::Ball => self.ball,
            StreamRole::Sphere => self.sphere,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RandomStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RandomStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self { seed, stream_id, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform on `(0, 1]`.
    fn uniform_open_low(&mut self) -> f64 {
        1.0 - self.uniform()
    }

    pub fn sign(&mut self) -> f64 {
        if self.rng.random::<bool>() {
            1.0
        } else {
            -1.0
        }
    }

    /// Fills `out` with independent standard normals (Box–Muller).
    pub fn fill_standard_normal(&mut self, out: &mut [f64]) {
        let mut chunks = out.chunks_exact_mut(2);
        for pair in &mut chunks {
            let (a, b) = self.normal_pair();
            pair[0] = a;
            pair[1] = b;
        }
        if let [last] = chunks.into_remainder() {
            *last = self.normal_pair().0;
        }
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.normal_pair().0
    }

    fn normal_pair(&mut self) -> (f64, f64) {
        let radius = libm::sqrt(-2.0 * libm::log(self.uniform_open_low()));
        let angle = std::f64::consts::TAU * self.uniform();
        (radius * libm::cos(angle), radius * libm::sin(angle))
    }
}

/// Uniform direction on the Euclidean unit sphere `S₂ⁿ(1)`.
pub fn sample_sphere(n: usize, stream: &mut RandomStream) -> Vec<f64> {
    let mut out = vec![0.0; n];
    sample_sphere_into(&mut out, stream);
    out
}

/// In-place variant of [`sample_sphere`]; the slice length is the dimension.
pub fn sample_sphere_into(out: &mut [f64], stream: &mut RandomStream) {
    assert!(!out.is_empty(), "sphere dimension must be at least 1");
    loop {
        stream.fill_standard_normal(out);
        let norm = libm::sqrt(out.iter().map(|v| v * v).sum::<f64>());
        // a zero Gaussian vector has probability zero but is not impossible in floating point
        if norm > 0.0 && norm.is_finite() {
            out.iter_mut().for_each(|v| *v /= norm);
            return;
        }
    }
}

/// Uniform point in the Euclidean unit ball `B₂ⁿ(1)`: a sphere direction
/// scaled by `U^{1/n}`.
pub fn sample_ball(n: usize, stream: &mut RandomStream) -> Vec<f64> {
    let mut out = vec![0.0; n];
    sample_ball_into(&mut out, stream);
    out
}

pub fn sample_ball_into(out: &mut [f64], stream: &mut RandomStream) {
    sample_sphere_into(out, stream);
    let radius = libm::pow(stream.uniform(), 1.0 / out.len() as f64);
    out.iter_mut().for_each(|v| *v *= radius);
}

/// Draws one realization token of `len` independent coordinates from `law`.
pub fn sample_xi(law: &XiLaw, len: usize, stream: &mut RandomStream) -> Xi {
    let values = match *law {
        XiLaw::Degenerate => vec![0.0; len],
        XiLaw::Rademacher { scale } => (0..len).map(|_| scale * stream.sign()).collect(),
        XiLaw::Gaussian { std } => {
            let mut v = vec![0.0; len];
            stream.fill_standard_normal(&mut v);
            v.iter_mut().for_each(|x| *x *= std);
            v
        }
        XiLaw::Uniform { half_width } => {
            (0..len).map(|_| half_width * (2.0 * stream.uniform() - 1.0)).collect()
        }
    };
    Xi::new(values)
}

/// One stream per role, derived from a single run seed.
#[derive(Debug, Clone)]
pub struct RunStreams {
    pub xi: RandomStream,
    pub ball: RandomStream,
    pub sphere: RandomStream,
}

impl RunStreams {
    pub fn new(seed: u64, ids: StreamIds) -> Self {
        Self {
            xi: RandomStream::new(seed, ids.xi),
            ball: RandomStream::new(seed, ids.ball),
            sphere: RandomStream::new(seed, ids.sphere),
        }
    }
}
