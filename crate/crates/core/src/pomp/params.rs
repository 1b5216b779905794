use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Map between a parameter's natural scale and the unconstrained scale used for perturbation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    /// `ln x`, for non-negative quantities. Zero maps to `-inf`.
    Log,
    /// `ln(1 + x)`, for non-negative counts where zero must stay finite.
    /// Negative estimation-scale values are reflected at zero.
    LogPlusOne,
    /// `ln(p / (1 - p))`, for fractions. The endpoints map to `∓inf`.
    Logit,
    Identity,
}

impl Transform {
    pub fn label(self) -> &'static str {
        match self {
            Transform::Log => "log",
            Transform::LogPlusOne => "log1p",
            Transform::Logit => "logit",
            Transform::Identity => "identity",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "log" => Some(Transform::Log),
            "log1p" => Some(Transform::LogPlusOne),
            "logit" => Some(Transform::Logit),
            "identity" => Some(Transform::Identity),
            _ => None,
        }
    }

    fn in_domain(self, x: f64) -> bool {
        match self {
            Transform::Log | Transform::LogPlusOne => x >= 0.0 && x.is_finite(),
            Transform::Logit => (0.0..=1.0).contains(&x),
            Transform::Identity => !x.is_nan(),
        }
    }

    pub fn forward(self, x: f64) -> f64 {
        match self {
            Transform::Log => x.ln(),
            Transform::LogPlusOne => x.ln_1p(),
            Transform::Logit => (x / (1.0 - x)).ln(),
            Transform::Identity => x,
        }
    }

    pub fn inverse(self, y: f64) -> f64 {
        match self {
            Transform::Log => y.exp(),
            Transform::LogPlusOne => y.abs().exp_m1(),
            Transform::Logit => 1.0 / (1.0 + (-y).exp()),
            Transform::Identity => y,
        }
    }
}

/// One named parameter with its transform and whether estimation may move it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameter {
    pub name: String,
    pub value: f64,
    pub transform: Transform,
    pub fixed: bool,
}

/// Named model parameters in a stable order.
///
/// The order defines the layout of estimation-scale vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSet {
    params: Vec<Parameter>,
    /// Time (days) at which "before" parameters give way to "after" parameters.
    pub regime_boundary: f64,
}

impl Default for ParameterSet {
    fn default() -> Self {
        Self::new()
    }
}

impl ParameterSet {
    pub fn new() -> Self {
        Self {
            params: Vec::new(),
            regime_boundary: f64::INFINITY,
        }
    }

    /// Adds (or replaces) a free parameter. Builder style.
    pub fn with(mut self, name: &str, value: f64, transform: Transform) -> Result<Self> {
        self.insert(name, value, transform)?;
        Ok(self)
    }

    pub fn with_regime_boundary(mut self, t: f64) -> Self {
        self.regime_boundary = t;
        self
    }

    pub fn insert(&mut self, name: &str, value: f64, transform: Transform) -> Result<()> {
        check_domain(name, value, transform)?;
        match self.index_of(name) {
            Some(i) => {
                self.params[i].value = value;
                self.params[i].transform = transform;
            }
            None => self.params.push(Parameter {
                name: name.to_string(),
                value,
                transform,
                fixed: false,
            }),
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.iter().map(|p| p.name.as_str())
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    pub fn get(&self, name: &str) -> Result<f64> {
        self.index_of(name)
            .map(|i| self.params[i].value)
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))
    }

    pub fn value_at(&self, i: usize) -> f64 {
        self.params[i].value
    }

    pub fn param(&self, name: &str) -> Result<&Parameter> {
        self.index_of(name)
            .map(|i| &self.params[i])
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))
    }

    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        let i = self
            .index_of(name)
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))?;
        check_domain(name, value, self.params[i].transform)?;
        self.params[i].value = value;
        Ok(())
    }

    pub fn set_fixed(&mut self, name: &str, fixed: bool) -> Result<()> {
        let i = self
            .index_of(name)
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))?;
        self.params[i].fixed = fixed;
        Ok(())
    }

    pub fn is_fixed(&self, i: usize) -> bool {
        self.params[i].fixed
    }

    /// Indices of parameters estimation is allowed to move.
    pub fn free_indices(&self) -> Vec<usize> {
        (0..self.params.len()).filter(|&i| !self.params[i].fixed).collect()
    }

    /// Every parameter mapped through its transform, in set order.
    pub fn to_estimation_scale(&self) -> Result<Vec<f64>> {
        self.params
            .iter()
            .map(|p| {
                check_domain(&p.name, p.value, p.transform)?;
                Ok(p.transform.forward(p.value))
            })
            .collect()
    }

    /// A copy of this set with values taken from an estimation-scale vector.
    pub fn from_estimation_scale(&self, theta: &[f64]) -> Result<ParameterSet> {
        if theta.len() != self.params.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} estimation-scale values", self.params.len()),
                found: theta.len().to_string(),
            });
        }
        let mut out = self.clone();
        for (p, &y) in out.params.iter_mut().zip(theta) {
            let x = p.transform.inverse(y);
            check_domain(&p.name, x, p.transform)?;
            p.value = x;
        }
        Ok(out)
    }
}

fn check_domain(name: &str, value: f64, transform: Transform) -> Result<()> {
    if transform.in_domain(value) {
        Ok(())
    } else {
        Err(Error::Domain {
            name: name.to_string(),
            value,
            transform: transform.label(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        let p = ParameterSet::new()
            .with("beta", 1.0, Transform::Log)
            .unwrap()
            .with("alpha", 0.5, Transform::Logit)
            .unwrap()
            .with("tau", 0.32, Transform::Log)
            .unwrap();
        let theta = p.to_estimation_scale().unwrap();
        assert_eq!(theta[0], 0.0);
        assert_eq!(theta[1], 0.0);
        // ln(0.32) from an arbitrary-precision log
        assert_abs_diff_eq!(theta[2], -1.139_434_283_188_365_5, epsilon = 1e-12);
    }

    #[test]
    fn domain_error_names_parameter() {
        let err = ParameterSet::new().with("alpha", 1.2, Transform::Logit).unwrap_err();
        match err {
            Error::Domain { name, .. } => assert_eq!(name, "alpha"),
            e => panic!("unexpected {e:?}"),
        }
        assert!(ParameterSet::new().with("beta", -1.0, Transform::Log).is_err());
    }

    #[test]
    fn fixed_parameters_excluded_from_free_set() {
        let mut p = ParameterSet::new()
            .with("a", 1.0, Transform::Log)
            .unwrap()
            .with("b", 2.0, Transform::Log)
            .unwrap();
        p.set_fixed("a", true).unwrap();
        assert_eq!(p.free_indices(), vec![1]);
    }

    #[test]
    fn log1p_reflects_negative_values() {
        let t = Transform::LogPlusOne;
        assert_eq!(t.inverse(-0.5), t.inverse(0.5));
        assert_eq!(t.inverse(0.0), 0.0);
    }

    fn arb_transform() -> impl Strategy<Value = (Transform, f64)> {
        prop_oneof![
            (1e-6f64..1e6).prop_map(|x| (Transform::Log, x)),
            (0.0f64..1e5).prop_map(|x| (Transform::LogPlusOne, x)),
            (1e-6f64..(1.0 - 1e-6)).prop_map(|x| (Transform::Logit, x)),
            (-1e6f64..1e6).prop_map(|x| (Transform::Identity, x)),
        ]
    }

    proptest! {
        #[test]
        fn estimation_scale_round_trip(entries in prop::collection::vec(arb_transform(), 1..12)) {
            let mut set = ParameterSet::new();
            for (i, (t, x)) in entries.iter().enumerate() {
                set.insert(&format!("p{i}"), *x, *t).unwrap();
            }
            let back = set.from_estimation_scale(&set.to_estimation_scale().unwrap()).unwrap();
            for (a, b) in set.iter().zip(back.iter()) {
                prop_assert!((a.value - b.value).abs() <= 1e-12 * a.value.abs().max(1.0));
            }
        }
    }
}
