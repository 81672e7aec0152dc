//! Membrane nonlinearity `f`, its sampled assumption certificate and the
//! `f + δ s` regularization.
//!
//! Every admissible `f` is an affine combination of the odd basis
//! `{s, tanh s, sin s, s³}`, so `f(0) = 0` holds exactly.

use serde::Serialize;

use crate::error::{Error, Result};

pub const DEFAULT_SAMPLE_RANGE: f64 = 50.0;
pub const DEFAULT_SAMPLES: usize = 10_000;

/// Derivative level below which a sampled tail is not treated as coercive.
const TAIL_COERCIVITY_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    /// `κ s`
    Linear,
    /// `κ s + tanh s`
    Coercive,
    /// `s + sin s`
    Noncoercive,
    /// `s³ + s`
    Cubic,
    /// `c₁ s + c₂ tanh s + c₃ sin s + c₄ s³`
    Combination,
}

impl Kind {
    pub fn parse(name: &str) -> Option<Kind> {
        match name {
            "linear" => Some(Kind::Linear),
            "coercive" => Some(Kind::Coercive),
            "noncoercive" => Some(Kind::Noncoercive),
            "cubic" => Some(Kind::Cubic),
            "combination" => Some(Kind::Combination),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Kind::Linear => "linear",
            Kind::Coercive => "coercive",
            Kind::Noncoercive => "noncoercive",
            Kind::Cubic => "cubic",
            Kind::Combination => "combination",
        }
    }
}

/// Coefficients of `s`, `tanh s`, `sin s`, `s³`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Coefficients {
    pub linear: f64,
    pub tanh: f64,
    pub sin: f64,
    pub cubic: f64,
}

impl Coefficients {
    fn eval(&self, s: f64) -> f64 {
        self.linear * s + self.tanh * s.tanh() + self.sin * s.sin() + self.cubic * s * s * s
    }

    fn deriv(&self, s: f64) -> f64 {
        let t = s.tanh();
        self.linear + self.tanh * (1.0 - t * t) + self.sin * s.cos() + 3.0 * self.cubic * s * s
    }
}

/// `f'(s) ≥ δ₀` for `|s| ≥ threshold`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailBound {
    pub delta0: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Certificate {
    pub monotone: bool,
    pub f0_zero: bool,
    /// Half-width of the sampled range.
    pub sample_range: f64,
    pub samples: usize,
    pub lambda1: f64,
    pub lambda2: f64,
    /// `inf f'` when positive; `None` for noncoercive `f`.
    pub coercive: Option<f64>,
    pub tail: Option<TailBound>,
    pub min_derivative: f64,
    pub max_derivative: f64,
    /// True when `coercive` and `tail` come from closed forms.
    pub analytic: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Nonlinearity {
    kind: Kind,
    kappa: f64,
    shift: f64,
    coeffs: Coefficients,
    certificate: Certificate,
}

/// User-facing description of `f`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NonlinearitySpec {
    pub kind: Kind,
    pub kappa: f64,
    /// Only read for `Kind::Combination`.
    pub coefficients: Coefficients,
    pub sample_range: f64,
}

impl NonlinearitySpec {
    pub fn builtin(kind: Kind, kappa: f64) -> Self {
        NonlinearitySpec {
            kind,
            kappa,
            coefficients: Coefficients {
                linear: 0.0,
                tanh: 0.0,
                sin: 0.0,
                cubic: 0.0,
            },
            sample_range: DEFAULT_SAMPLE_RANGE,
        }
    }

    pub fn combination(coefficients: Coefficients) -> Self {
        NonlinearitySpec {
            kind: Kind::Combination,
            kappa: 0.0,
            coefficients,
            sample_range: DEFAULT_SAMPLE_RANGE,
        }
    }
}

fn samples(range: f64, n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |i| -range + 2.0 * range * i as f64 / (n - 1) as f64)
}

pub fn make_nonlinearity(spec: &NonlinearitySpec) -> Result<Nonlinearity> {
    if !(spec.sample_range > 0.0 && spec.sample_range.is_finite()) {
        return Err(Error::param("f.sample_range", "must be positive"));
    }
    let coeffs = match spec.kind {
        Kind::Linear | Kind::Coercive => {
            if !(spec.kappa > 0.0 && spec.kappa.is_finite()) {
                return Err(Error::param("f.kappa", format!("{} must be > 0", spec.kappa)));
            }
            Coefficients {
                linear: spec.kappa,
                tanh: if spec.kind == Kind::Coercive { 1.0 } else { 0.0 },
                sin: 0.0,
                cubic: 0.0,
            }
        }
        Kind::Noncoercive => Coefficients {
            linear: 1.0,
            tanh: 0.0,
            sin: 1.0,
            cubic: 0.0,
        },
        Kind::Cubic => Coefficients {
            linear: 1.0,
            tanh: 0.0,
            sin: 0.0,
            cubic: 1.0,
        },
        Kind::Combination => spec.coefficients,
    };
    let kappa = match spec.kind {
        Kind::Linear | Kind::Coercive => spec.kappa,
        _ => 0.0,
    };
    build(spec.kind, kappa, 0.0, coeffs, spec.sample_range)
}

fn build(kind: Kind, kappa: f64, shift: f64, coeffs: Coefficients, range: f64) -> Result<Nonlinearity> {
    let c = [coeffs.linear, coeffs.tanh, coeffs.sin, coeffs.cubic];
    if c.iter().any(|x| !x.is_finite()) {
        return Err(Error::Nonlinearity("non-finite coefficient".into()));
    }
    let mut certificate = sample_certificate(&coeffs, range, DEFAULT_SAMPLES);
    if !certificate.monotone {
        return Err(Error::Nonlinearity(format!(
            "f is not strictly increasing on [-{range}, {range}] (min f' = {:.3e})",
            certificate.min_derivative
        )));
    }
    let analytic = match kind {
        Kind::Linear | Kind::Coercive => Some(kappa + shift),
        Kind::Cubic => Some(1.0 + shift),
        Kind::Noncoercive if shift > 0.0 => Some(shift),
        Kind::Noncoercive => None,
        Kind::Combination => {
            // Closed form only when every term has a nonnegative derivative.
            let ok = coeffs.linear >= 0.0 && coeffs.tanh >= 0.0 && coeffs.sin == 0.0 && coeffs.cubic >= 0.0;
            if ok && coeffs.linear > 0.0 {
                Some(coeffs.linear)
            } else {
                certificate.analytic = false;
                certificate.coercive = sampled_coercivity(&certificate);
                certificate.tail = sampled_tail(&coeffs, range, DEFAULT_SAMPLES, &certificate);
                let (l1, l2) = growth_constants(&coeffs, range, DEFAULT_SAMPLES)?;
                certificate.lambda1 = l1;
                certificate.lambda2 = l2;
                return Ok(Nonlinearity {
                    kind,
                    kappa,
                    shift,
                    coeffs,
                    certificate,
                });
            }
        }
    };
    certificate.analytic = true;
    certificate.coercive = analytic;
    certificate.tail = analytic.map(|k| TailBound {
        delta0: k,
        threshold: 0.0,
    });
    let (l1, l2) = match kind {
        Kind::Linear | Kind::Coercive | Kind::Cubic => (analytic.unwrap_or(0.0), 0.0),
        _ => growth_constants(&coeffs, range, DEFAULT_SAMPLES)?,
    };
    certificate.lambda1 = l1;
    certificate.lambda2 = l2;
    Ok(Nonlinearity {
        kind,
        kappa,
        shift,
        coeffs,
        certificate,
    })
}

fn sample_certificate(c: &Coefficients, range: f64, n: usize) -> Certificate {
    let mut min_d = f64::INFINITY;
    let mut max_d = f64::NEG_INFINITY;
    let mut strictly_increasing = true;
    let mut prev: Option<f64> = None;
    for s in samples(range, n) {
        let d = c.deriv(s);
        min_d = min_d.min(d);
        max_d = max_d.max(d);
        let v = c.eval(s);
        if let Some(p) = prev {
            if v <= p {
                strictly_increasing = false;
            }
        }
        prev = Some(v);
    }
    Certificate {
        monotone: strictly_increasing && min_d >= -1e-12,
        f0_zero: c.eval(0.0) == 0.0,
        sample_range: range,
        samples: n,
        lambda1: 0.0,
        lambda2: 0.0,
        coercive: None,
        tail: None,
        min_derivative: min_d,
        max_derivative: max_d,
        analytic: false,
    }
}

fn sampled_coercivity(cert: &Certificate) -> Option<f64> {
    (cert.min_derivative > TAIL_COERCIVITY_FLOOR).then_some(cert.min_derivative)
}

fn sampled_tail(c: &Coefficients, range: f64, n: usize, cert: &Certificate) -> Option<TailBound> {
    if let Some(k) = sampled_coercivity(cert) {
        return Some(TailBound {
            delta0: k,
            threshold: 0.0,
        });
    }
    let pts: Vec<f64> = samples(range, n).collect();
    let tail_min = pts
        .iter()
        .filter(|s| s.abs() >= 0.5 * range)
        .map(|&s| c.deriv(s))
        .fold(f64::INFINITY, f64::min);
    if tail_min <= TAIL_COERCIVITY_FLOOR {
        return None;
    }
    let delta0 = 0.5 * tail_min;
    // Smallest |s| beyond which every sample satisfies f' ≥ δ₀.
    let threshold = pts
        .iter()
        .filter(|&&s| c.deriv(s) < delta0)
        .map(|s| s.abs())
        .fold(0.0, f64::max);
    Some(TailBound { delta0, threshold })
}

fn growth_constants(c: &Coefficients, range: f64, n: usize) -> Result<(f64, f64)> {
    let ratios: Vec<(f64, f64)> = samples(range, n)
        .filter(|&s| s != 0.0)
        .map(|s| (s, c.eval(s) / s))
        .collect();
    let min_ratio = ratios.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    let tail = ratios
        .iter()
        .filter(|r| r.0.abs() >= 0.5 * range)
        .map(|r| r.1)
        .fold(f64::INFINITY, f64::min);
    if min_ratio > 1e-3 * tail.max(0.0) && min_ratio > 0.0 {
        return Ok((min_ratio, 0.0));
    }
    if !(tail > 0.0) {
        return Err(Error::GrowthConstants(format!(
            "f(s)/s does not stay positive on [-{range}, {range}] (tail minimum {tail:.3e})"
        )));
    }
    let lambda1 = 0.5 * tail;
    let lambda2 = ratios
        .iter()
        .map(|&(s, r)| s.abs() * (lambda1 - r))
        .fold(0.0, f64::max);
    Ok((lambda1, lambda2))
}

/// Fits `(λ₁, λ₂)` with `f(s)s ≥ λ₁s² − λ₂|s|` at every sample of
/// `[-range, range]`. `λ₁` is the smallest sampled `f(s)/s` with `λ₂ = 0`;
/// only when that ratio degenerates is `λ₁` lowered to half the tail ratio
/// and `λ₂` chosen minimal.
pub fn fit_growth_constants(f: &Nonlinearity, range: f64) -> Result<(f64, f64)> {
    if !(range > 0.0) {
        return Err(Error::param("sample_range", "must be positive"));
    }
    if let Some(k) = f.linear_slope() {
        return Ok((k, 0.0));
    }
    growth_constants(&f.coeffs, range, DEFAULT_SAMPLES)
}

pub fn regularize(f: &Nonlinearity, delta: f64) -> Result<Nonlinearity> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::param("delta", format!("{delta} must be > 0")));
    }
    let mut coeffs = f.coeffs;
    coeffs.linear += delta;
    if f.kind == Kind::Linear {
        build(Kind::Linear, f.kappa + delta, 0.0, coeffs, f.certificate.sample_range)
    } else if f.kind == Kind::Combination {
        build(Kind::Combination, 0.0, 0.0, coeffs, f.certificate.sample_range)
    } else {
        build(f.kind, f.kappa, f.shift + delta, coeffs, f.certificate.sample_range)
    }
}

impl Nonlinearity {
    pub fn linear(kappa: f64) -> Result<Self> {
        make_nonlinearity(&NonlinearitySpec::builtin(Kind::Linear, kappa))
    }

    pub fn builtin(kind: Kind, kappa: f64) -> Result<Self> {
        make_nonlinearity(&NonlinearitySpec::builtin(kind, kappa))
    }

    #[inline]
    pub fn eval(&self, s: f64) -> f64 {
        self.coeffs.eval(s)
    }

    #[inline]
    pub fn deriv(&self, s: f64) -> f64 {
        self.coeffs.deriv(s)
    }

    /// `(f(b) − f(a)) / (b − a)`, or `f'(a)` when the points coincide.
    pub fn secant(&self, a: f64, b: f64) -> f64 {
        if a == b {
            self.deriv(a)
        } else {
            (self.eval(b) - self.eval(a)) / (b - a)
        }
    }

    pub fn kind(&self) -> Kind {
        self.kind
    }

    /// `κ` for linear and coercive kinds (including any regularization shift
    /// already folded in for `Linear`).
    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// Accumulated regularization `δ` for non-linear kinds.
    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn coefficients(&self) -> Coefficients {
        self.coeffs
    }

    pub fn certificate(&self) -> &Certificate {
        &self.certificate
    }

    /// True when `f` is exactly linear, `f(s) = slope · s`.
    pub fn linear_slope(&self) -> Option<f64> {
        let c = self.coeffs;
        (c.tanh == 0.0 && c.sin == 0.0 && c.cubic == 0.0).then_some(c.linear)
    }

    pub fn is_odd(&self) -> bool {
        true
    }

    pub fn describe(&self) -> String {
        let base = match self.kind {
            Kind::Linear => format!("{} s", self.kappa),
            Kind::Coercive => format!("{} s + tanh s", self.kappa),
            Kind::Noncoercive => "s + sin s".to_string(),
            Kind::Cubic => "s^3 + s".to_string(),
            Kind::Combination => {
                let c = self.coeffs;
                format!("{} s + {} tanh s + {} sin s + {} s^3", c.linear, c.tanh, c.sin, c.cubic)
            }
        };
        if self.shift > 0.0 {
            format!("{base} + {} s", self.shift)
        } else {
            base
        }
    }
}
