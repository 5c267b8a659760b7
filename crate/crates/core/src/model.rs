//! Static objects of the network: spiking rate, interaction kernel, lattice
//! neighbourhoods and the jump records shared by the backward and forward
//! passes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape of the spiking rate function.
#[derive(Clone, Debug, PartialEq)]
pub enum RateFamily {
    /// `(beta_max + x * beta_min) / (1 + x)`, decreasing from `beta_max` at
    /// rest towards `beta_min` under infinite inhibition.
    Hyperbolic,
    /// Piecewise-linear interpolation through `(x, rate)` knots, held constant
    /// after the last knot.
    Table(Vec<(f64, f64)>),
}

/// Spiking rate as a function of the inhibition state.
///
/// Always satisfies `beta_min < eval(x) <= beta_max` and is non-increasing in
/// `x`.
#[derive(Clone, Debug, PartialEq)]
pub struct RateFunction {
    beta_min: f64,
    beta_max: f64,
    family: RateFamily,
}

impl RateFunction {
    pub fn hyperbolic(beta_min: f64, beta_max: f64) -> Result<Self> {
        check_bounds(beta_min, beta_max)?;
        Ok(Self {
            beta_min,
            beta_max,
            family: RateFamily::Hyperbolic,
        })
    }

    /// Builds a tabulated rate. Knots must start at `x = 0`, have strictly
    /// increasing abscissae, non-increasing rates, and every rate must lie in
    /// `(beta_min, beta_max]`.
    pub fn table(beta_min: f64, beta_max: f64, knots: Vec<(f64, f64)>) -> Result<Self> {
        check_bounds(beta_min, beta_max)?;
        if knots.is_empty() {
            return Err(Error::field("rate_table", "at least one knot is required"));
        }
        if knots[0].0 != 0.0 {
            return Err(Error::field("rate_table", "first knot must sit at x = 0"));
        }
        for w in knots.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(Error::field("rate_table", "knot abscissae must be strictly increasing"));
            }
            if w[1].1 > w[0].1 {
                return Err(Error::field("rate_table", "rates must be non-increasing"));
            }
        }
        for &(x, r) in &knots {
            if !x.is_finite() || !(r > beta_min && r <= beta_max) {
                return Err(Error::field(
                    "rate_table",
                    format!("knot ({x}, {r}) lies outside (beta_min, beta_max]"),
                ));
            }
        }
        Ok(Self {
            beta_min,
            beta_max,
            family: RateFamily::Table(knots),
        })
    }

    pub fn beta_min(&self) -> f64 {
        self.beta_min
    }

    pub fn beta_max(&self) -> f64 {
        self.beta_max
    }

    pub fn family(&self) -> &RateFamily {
        &self.family
    }

    /// Probability that an atom of the dominating process is a sure jump.
    pub fn sure_probability(&self) -> f64 {
        self.beta_min / self.beta_max
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        if !(x >= 0.0) {
            return Err(Error::contract(format!("rate evaluated at negative potential {x}")));
        }
        Ok(self.value(x))
    }

    pub(crate) fn value(&self, x: f64) -> f64 {
        let raw = match &self.family {
            RateFamily::Hyperbolic => {
                if x.is_infinite() {
                    self.beta_min
                } else {
                    (self.beta_max + x * self.beta_min) / (1.0 + x)
                }
            }
            RateFamily::Table(knots) => interpolate(knots, x),
        };
        // Rounding at huge x can land exactly on beta_min.
        raw.min(self.beta_max).max(next_up(self.beta_min))
    }
}

fn check_bounds(beta_min: f64, beta_max: f64) -> Result<()> {
    if !(beta_min > 0.0) || !beta_min.is_finite() {
        return Err(Error::field("beta_min", format!("must be positive and finite, got {beta_min}")));
    }
    if !beta_max.is_finite() {
        return Err(Error::field("beta_max", format!("must be finite, got {beta_max}")));
    }
    if !(beta_min < beta_max) {
        return Err(Error::field(
            "beta_min",
            format!("must be strictly below beta_max ({beta_min} >= {beta_max})"),
        ));
    }
    Ok(())
}

fn interpolate(knots: &[(f64, f64)], x: f64) -> f64 {
    let pos = knots.partition_point(|&(kx, _)| kx <= x);
    if pos == knots.len() {
        return knots[knots.len() - 1].1;
    }
    let (x0, y0) = knots[pos - 1];
    let (x1, y1) = knots[pos];
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

fn next_up(v: f64) -> f64 {
    f64::from_bits(v.to_bits() + 1)
}

/// Interaction kernel `weight * (1 + t)^(-lambda)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InteractionKernel {
    weight: f64,
    lambda: f64,
}

impl InteractionKernel {
    pub fn power_law(weight: f64, lambda: f64) -> Result<Self> {
        if !(weight > 0.0 && weight.is_finite()) {
            return Err(Error::field("W", format!("must be positive and finite, got {weight}")));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::field("lambda", format!("must be positive and finite, got {lambda}")));
        }
        Ok(Self { weight, lambda })
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn eval(&self, elapsed: f64) -> Result<f64> {
        if !(elapsed >= 0.0) {
            return Err(Error::contract(format!("kernel evaluated at negative elapsed time {elapsed}")));
        }
        Ok(self.value(elapsed))
    }

    #[inline]
    pub(crate) fn value(&self, elapsed: f64) -> f64 {
        self.weight * (1.0 + elapsed).powf(-self.lambda)
    }
}

/// Homogeneous finite-range network on the integer lattice.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkConfig {
    pub range: u32,
    pub kernel: InteractionKernel,
    pub rate: RateFunction,
}

impl NetworkConfig {
    pub fn new(range: u32, kernel: InteractionKernel, rate: RateFunction) -> Result<Self> {
        if range == 0 {
            return Err(Error::field("range", "must be at least 1"));
        }
        Ok(Self {
            range,
            kernel,
            rate,
        })
    }

    /// Nearest-neighbour network with `W = 1, lambda = 2` and the hyperbolic
    /// rate between 2 Hz and 3 Hz.
    pub fn reference() -> Self {
        ModelParams::default()
            .build()
            .expect("reference parameters are valid")
    }

    /// Neighbours of `i`, sorted ascending. Never contains `i`.
    pub fn neighbors(&self, i: i64) -> Vec<i64> {
        let r = i64::from(self.range);
        (i - r..=i + r).filter(|&j| j != i).collect()
    }

    pub fn is_neighbor(&self, i: i64, j: i64) -> bool {
        i != j && (i - j).unsigned_abs() <= u64::from(self.range)
    }
}

/// User-facing model parameters, serialised as
/// `{beta_min, beta_max, W, lambda, range}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub beta_min: f64,
    pub beta_max: f64,
    #[serde(rename = "W")]
    pub w: f64,
    pub lambda: f64,
    pub range: u32,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            beta_min: 2.0,
            beta_max: 3.0,
            w: 1.0,
            lambda: 2.0,
            range: 1,
        }
    }
}

impl ModelParams {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn build(&self) -> Result<NetworkConfig> {
        let rate = RateFunction::hyperbolic(self.beta_min, self.beta_max)?;
        let kernel = InteractionKernel::power_law(self.w, self.lambda)?;
        NetworkConfig::new(self.range, kernel, rate)
    }
}

/// Sum of kernel contributions at time `t` from presynaptic spikes at
/// `times`, all strictly earlier than `t`.
pub fn potential_at(times: &[f64], t: f64, kernel: &InteractionKernel) -> Result<f64> {
    if let Some(&bad) = times.iter().find(|&&s| !(s < t)) {
        return Err(Error::contract(format!(
            "presynaptic time {bad} is not before evaluation time {t}"
        )));
    }
    Ok(accumulate(times, t, kernel))
}

#[inline]
pub(crate) fn accumulate(times: &[f64], t: f64, kernel: &InteractionKernel) -> f64 {
    times.iter().fold(0.0, |acc, &s| acc + kernel.value(t - s))
}

/// How an atom of the dominating process was classified.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Resolution {
    Sure,
    CandidateUnresolved,
    CandidateAccepted,
    CandidateRejected,
}

impl Resolution {
    /// True when the atom is an actual spike of its neuron.
    pub fn is_spike(self) -> bool {
        matches!(self, Resolution::Sure | Resolution::CandidateAccepted)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Resolution::Sure => "sure",
            Resolution::CandidateUnresolved => "unresolved",
            Resolution::CandidateAccepted => "accepted",
            Resolution::CandidateRejected => "rejected",
        }
    }
}

/// One atom of the dominating Poisson process.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JumpRecord {
    /// 1-based generation order in the backward pass.
    pub index: u64,
    pub neuron: i64,
    /// Non-positive time of the atom.
    pub time: f64,
    /// Uniform mark on `[0, 1)`.
    pub mark: f64,
    pub resolution: Resolution,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    fn k(w: f64, l: f64) -> InteractionKernel {
        InteractionKernel::power_law(w, l).unwrap()
    }

    #[test]
    fn kernel_values() {
        assert_eq!(k(1.0, 2.0).eval(0.0).unwrap(), 1.0);
        assert_eq!(k(1.0, 2.0).eval(1.0).unwrap(), 0.25);
        assert_eq!(k(1.0, 0.1).eval(0.0).unwrap(), 1.0);
        assert!(matches!(k(1.0, 2.0).eval(-1e-9), Err(Error::Contract(_))));
    }

    #[test]
    fn hyperbolic_rate_values() {
        let r = RateFunction::hyperbolic(2.0, 3.0).unwrap();
        assert_eq!(r.eval(0.0).unwrap(), 3.0);
        assert!(close(r.eval(10.0).unwrap(), 23.0 / 11.0, 1e-15));
        let far = r.eval(1e12).unwrap();
        assert!(far > 2.0 && far - 2.0 < 1e-9);
        assert!(r.eval(f64::INFINITY).unwrap() > 2.0);
        assert!(matches!(r.eval(-0.5), Err(Error::Contract(_))));
        assert_eq!(r.sure_probability(), 2.0 / 3.0);
    }

    #[test]
    fn rate_bounds_rejected() {
        let e = RateFunction::hyperbolic(3.0, 3.0).unwrap_err();
        assert!(matches!(e, Error::InvalidField { field: "beta_min", .. }));
        let e = RateFunction::hyperbolic(0.0, 3.0).unwrap_err();
        assert!(matches!(e, Error::InvalidField { field: "beta_min", .. }));
        let e = RateFunction::hyperbolic(1.0, f64::INFINITY).unwrap_err();
        assert!(matches!(e, Error::InvalidField { field: "beta_max", .. }));
    }

    #[test]
    fn table_rate_interpolates_and_holds() {
        let r = RateFunction::table(1.0, 4.0, vec![(0.0, 4.0), (2.0, 2.0), (4.0, 1.5)]).unwrap();
        assert_eq!(r.eval(0.0).unwrap(), 4.0);
        assert_eq!(r.eval(1.0).unwrap(), 3.0);
        assert_eq!(r.eval(3.0).unwrap(), 1.75);
        assert_eq!(r.eval(100.0).unwrap(), 1.5);
    }

    #[test]
    fn table_rate_validation() {
        assert!(RateFunction::table(1.0, 4.0, vec![]).is_err());
        assert!(RateFunction::table(1.0, 4.0, vec![(0.5, 3.0)]).is_err());
        assert!(RateFunction::table(1.0, 4.0, vec![(0.0, 3.0), (1.0, 3.5)]).is_err());
        assert!(RateFunction::table(1.0, 4.0, vec![(0.0, 3.0), (0.0, 2.0)]).is_err());
        assert!(RateFunction::table(1.0, 4.0, vec![(0.0, 3.0), (1.0, 1.0)]).is_err());
        assert!(RateFunction::table(1.0, 4.0, vec![(0.0, 4.5)]).is_err());
    }

    #[test]
    fn potential_values() {
        let kern = k(1.0, 2.0);
        assert_eq!(potential_at(&[], 0.0, &kern).unwrap(), 0.0);
        assert_eq!(potential_at(&[-1.0], 0.0, &kern).unwrap(), 0.25);
        // 1/4 + 1/1.5^2 = 1/4 + 4/9 = 25/36
        let v = potential_at(&[-1.0, -0.5], 0.0, &kern).unwrap();
        assert!(close(v, 25.0 / 36.0, 1e-15));
        assert!(potential_at(&[-1.0, 0.0], 0.0, &kern).is_err());
    }

    #[test]
    fn neighbourhoods() {
        let mut p = ModelParams::default();
        let c = p.build().unwrap();
        assert_eq!(c.neighbors(0), vec![-1, 1]);
        assert_eq!(c.neighbors(5), vec![4, 6]);
        p.range = 2;
        let c = p.build().unwrap();
        assert_eq!(c.neighbors(0), vec![-2, -1, 1, 2]);
        assert!(c.is_neighbor(0, 2) && !c.is_neighbor(0, 0) && !c.is_neighbor(0, 3));
    }

    #[test]
    fn params_json_names_offending_field() {
        let p = ModelParams::from_json(r#"{"beta_min":2,"beta_max":3,"W":1,"lambda":2,"range":1}"#).unwrap();
        assert_eq!(p, ModelParams::default());
        let p = ModelParams::from_json(r#"{"beta_min":2,"beta_max":3,"W":-1,"lambda":2,"range":1}"#).unwrap();
        assert!(p.build().unwrap_err().to_string().contains("`W`"));
        let p = ModelParams::from_json(r#"{"beta_min":2,"beta_max":3,"W":1,"lambda":0,"range":1}"#).unwrap();
        assert!(p.build().unwrap_err().to_string().contains("`lambda`"));
        let p = ModelParams::from_json(r#"{"beta_min":2,"beta_max":3,"W":1,"lambda":1,"range":0}"#).unwrap();
        assert!(p.build().unwrap_err().to_string().contains("`range`"));
        assert!(ModelParams::from_json(r#"{"beta_min":2}"#).is_err());
    }
}
