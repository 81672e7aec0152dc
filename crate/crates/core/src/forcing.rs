//! Separable boundary data `Ψ(x,t) = A ψ_s(x) ψ_t(t)` and initial membrane
//! jumps `S(x,y) = A χ(x) η(y)`.

use std::f64::consts::{FRAC_PI_4, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::EpsilonDomain;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SpatialProfile {
    Constant,
    /// `offset + gradient · x`
    Affine { gradient: [f64; 2], offset: f64 },
    /// `Π_d sin(k π x_d + φ)`; a nonzero phase keeps the data nonzero on `∂Ω`.
    Sines { wavenumber: f64, phase: f64 },
}

impl SpatialProfile {
    pub fn default_affine() -> Self {
        SpatialProfile::Affine {
            gradient: [1.0, 0.0],
            offset: 0.0,
        }
    }

    pub fn default_sines() -> Self {
        SpatialProfile::Sines {
            wavenumber: 1.0,
            phase: FRAC_PI_4,
        }
    }

    pub fn eval(&self, x: [f64; 2], dim: usize) -> f64 {
        match *self {
            SpatialProfile::Constant => 1.0,
            SpatialProfile::Affine { gradient, offset } => {
                offset + (0..dim).map(|d| gradient[d] * x[d]).sum::<f64>()
            }
            SpatialProfile::Sines { wavenumber, phase } => {
                (0..dim).map(|d| (wavenumber * PI * x[d] + phase).sin()).product()
            }
        }
    }

    /// Exact gradient, used by the two-scale solver.
    pub fn gradient(&self, x: [f64; 2], dim: usize) -> [f64; 2] {
        let mut g = [0.0; 2];
        match *self {
            SpatialProfile::Constant => {}
            SpatialProfile::Affine { gradient, .. } => {
                g[..dim].copy_from_slice(&gradient[..dim]);
            }
            SpatialProfile::Sines { wavenumber, phase } => {
                for d in 0..dim {
                    let mut p = wavenumber * PI * (wavenumber * PI * x[d] + phase).cos();
                    for e in 0..dim {
                        if e != d {
                            p *= (wavenumber * PI * x[e] + phase).sin();
                        }
                    }
                    g[d] = p;
                }
            }
        }
        g
    }

    pub fn is_affine(&self) -> bool {
        !matches!(self, SpatialProfile::Sines { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TemporalProfile {
    Constant,
    /// `sin 2πt`
    Sine,
    /// `c0 + c1 sin 2πt`
    OffsetSine { c0: f64, c1: f64 },
}

impl TemporalProfile {
    pub fn eval(&self, t: f64) -> f64 {
        // Reduce to [0, 1) first so that periodicity is exact up to rounding
        // of the fractional part.
        let tau = t - t.floor();
        match *self {
            TemporalProfile::Constant => 1.0,
            TemporalProfile::Sine => (2.0 * PI * tau).sin(),
            TemporalProfile::OffsetSine { c0, c1 } => c0 + c1 * (2.0 * PI * tau).sin(),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, TemporalProfile::Constant)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundaryData {
    pub amplitude: f64,
    pub spatial: SpatialProfile,
    pub temporal: TemporalProfile,
}

impl BoundaryData {
    pub fn new(amplitude: f64, spatial: SpatialProfile, temporal: TemporalProfile) -> Result<Self> {
        if !amplitude.is_finite() {
            return Err(Error::param("psi.amplitude", "must be finite"));
        }
        Ok(BoundaryData {
            amplitude,
            spatial,
            temporal,
        })
    }

    pub fn zero() -> Self {
        BoundaryData {
            amplitude: 0.0,
            spatial: SpatialProfile::Constant,
            temporal: TemporalProfile::Constant,
        }
    }

    pub fn constant(c: f64) -> Self {
        BoundaryData {
            amplitude: c,
            spatial: SpatialProfile::Constant,
            temporal: TemporalProfile::Constant,
        }
    }

    pub fn eval(&self, x: [f64; 2], t: f64, dim: usize) -> f64 {
        self.amplitude * self.spatial.eval(x, dim) * self.temporal.eval(t)
    }

    pub fn spatial_part(&self, x: [f64; 2], dim: usize) -> f64 {
        self.amplitude * self.spatial.eval(x, dim)
    }

    pub fn time_factor(&self, t: f64) -> f64 {
        self.temporal.eval(t)
    }

    pub fn negated(&self) -> Self {
        BoundaryData {
            amplitude: -self.amplitude,
            ..*self
        }
    }

    /// True when `Ψ` is constant in both space and time.
    pub fn is_constant(&self) -> bool {
        self.amplitude == 0.0
            || (matches!(self.spatial, SpatialProfile::Constant) && self.temporal.is_constant())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum InitKind {
    Zero,
    /// `η ≡ 1`
    Uniform,
    /// `η(y) = cos 2πy₁ − cos 2πy₂` (in 1D: `+1` left of the cell centre, `−1` right).
    Oscillating,
    /// Independent uniform draws in `[−1, 1]` per facet.
    Random,
}

impl InitKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "zero" => Some(InitKind::Zero),
            "uniform" => Some(InitKind::Uniform),
            "oscillating" => Some(InitKind::Oscillating),
            "random" => Some(InitKind::Random),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MacroProfile {
    Flat,
    /// `Π sin(π x_d)`
    Bump,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InitialJump {
    pub kind: InitKind,
    pub amplitude: f64,
    pub profile: MacroProfile,
    pub seed: u64,
}

impl InitialJump {
    pub fn zero() -> Self {
        InitialJump {
            kind: InitKind::Zero,
            amplitude: 0.0,
            profile: MacroProfile::Flat,
            seed: 0,
        }
    }

    pub fn new(kind: InitKind, amplitude: f64, profile: MacroProfile, seed: u64) -> Self {
        InitialJump {
            kind,
            amplitude,
            profile,
            seed,
        }
    }

    fn chi(&self, x: [f64; 2], dim: usize) -> f64 {
        match self.profile {
            MacroProfile::Flat => 1.0,
            MacroProfile::Bump => (0..dim).map(|d| (PI * x[d]).sin()).product(),
        }
    }

    fn eta(&self, y: [f64; 2], dim: usize, rng: &mut ChaCha8Rng) -> f64 {
        match self.kind {
            InitKind::Zero => 0.0,
            InitKind::Uniform => 1.0,
            InitKind::Oscillating => {
                if dim == 1 {
                    if y[0] < 0.5 {
                        1.0
                    } else {
                        -1.0
                    }
                } else {
                    (2.0 * PI * y[0]).cos() - (2.0 * PI * y[1]).cos()
                }
            }
            InitKind::Random => rng.random_range(-1.0..=1.0),
        }
    }

    /// `S(x, y)` at a list of `(x, y)` points; random draws follow list order.
    pub fn sample(&self, points: impl Iterator<Item = ([f64; 2], [f64; 2])>, dim: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        points
            .map(|(x, y)| {
                if self.kind == InitKind::Zero {
                    0.0
                } else {
                    self.amplitude * self.chi(x, dim) * self.eta(y, dim, &mut rng)
                }
            })
            .collect()
    }

    /// Micro initial jump `S_ε(x) = ε S(x, x/ε)` at the facet midpoints.
    pub fn micro_values(&self, domain: &EpsilonDomain) -> Vec<f64> {
        let eps = domain.epsilon();
        let mut v = self.sample(domain.facets().iter().map(|f| (f.midpoint, f.local)), domain.dim());
        for x in &mut v {
            *x *= eps;
        }
        v
    }

    /// Largest `|S|` over all `(x, y)`.
    pub fn sup_bound(&self) -> f64 {
        let eta = match self.kind {
            InitKind::Zero => 0.0,
            InitKind::Uniform | InitKind::Random => 1.0,
            InitKind::Oscillating => 2.0,
        };
        self.amplitude.abs() * eta
    }
}
