//! The f-divergence regularizer family.
//!
//! Each family supplies a convex generator `phi` with `phi(1) = 0`, its first
//! and second derivatives, and `psi = (-phi')^{-1}`, the strictly decreasing
//! map that turns dual coordinates back into probability ratios. `psi` is
//! defined on `(L, +inf)` where `L = -sup phi'`.
//!
//! | family      | `phi(x)`                          | `psi(y)`                          | `L`    |
//! |-------------|-----------------------------------|-----------------------------------|--------|
//! | `kl`        | `x ln x`                          | `exp(-y - 1)`                     | `-inf` |
//! | `rkl`       | `-ln x`                           | `1 / y`                           | `0`    |
//! | `alpha:<a>` | `4/(1-a^2) (1 - x^((1+a)/2))`     | `((1-a)/2 y)^(2/(a-1))`           | `0`    |
//! | `hellinger` | `4 (1 - sqrt x)` (= `alpha:0`)    | `4 / y^2`                         | `0`    |
//!
//! Hellinger is exactly the `alpha = 0` member. It is not rescaled by 1/2, so
//! a Hellinger run at `tau` matches the halved divergence at `2 tau`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::table::{Policy, Table, POLICY_FLOOR};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Family {
    Kl,
    ReverseKl,
    Hellinger,
    /// Requires `alpha < 1` and `alpha != -1` (use [`Family::ReverseKl`]).
    Alpha(f64),
}

impl Family {
    pub fn alpha(alpha: f64) -> Result<Self> {
        if !(alpha < 1.0) || alpha == -1.0 || !alpha.is_finite() {
            return Err(Error::Config(format!(
                "alpha-divergence needs finite alpha < 1 and alpha != -1, got {alpha}"
            )));
        }
        Ok(Family::Alpha(alpha))
    }

    /// The alpha parameter for the power families.
    fn power(self) -> Option<f64> {
        match self {
            Family::Hellinger => Some(0.0),
            Family::Alpha(a) => Some(a),
            _ => None,
        }
    }

    pub fn is_kl(self) -> bool {
        matches!(self, Family::Kl)
    }

    /// `L = -sup phi'`; `-inf` for KL.
    pub fn lower_bound(self) -> f64 {
        match self {
            Family::Kl => f64::NEG_INFINITY,
            _ => 0.0,
        }
    }

    fn check_positive(what: &'static str, x: f64) -> Result<()> {
        if x > 0.0 {
            Ok(())
        } else {
            Err(Error::Domain { what, value: x })
        }
    }

    pub fn phi(self, x: f64) -> Result<f64> {
        Self::check_positive("phi", x)?;
        Ok(self.phi_unchecked(x))
    }

    pub fn phi_prime(self, x: f64) -> Result<f64> {
        Self::check_positive("phi'", x)?;
        Ok(self.phi_prime_unchecked(x))
    }

    pub fn phi_second(self, x: f64) -> Result<f64> {
        Self::check_positive("phi''", x)?;
        Ok(self.phi_second_unchecked(x))
    }

    pub fn psi(self, y: f64) -> Result<f64> {
        if y > self.lower_bound() {
            Ok(self.psi_unchecked(y))
        } else {
            Err(Error::Domain {
                what: "psi",
                value: y,
            })
        }
    }

    pub(crate) fn phi_unchecked(self, x: f64) -> f64 {
        match self {
            Family::Kl => x * x.ln(),
            Family::ReverseKl => -x.ln(),
            _ => {
                let a = self.power().unwrap();
                4.0 / (1.0 - a * a) * (1.0 - x.powf((1.0 + a) / 2.0))
            }
        }
    }

    pub(crate) fn phi_prime_unchecked(self, x: f64) -> f64 {
        match self {
            Family::Kl => x.ln() + 1.0,
            Family::ReverseKl => -1.0 / x,
            _ => {
                let a = self.power().unwrap();
                2.0 / (a - 1.0) * x.powf((a - 1.0) / 2.0)
            }
        }
    }

    pub(crate) fn phi_second_unchecked(self, x: f64) -> f64 {
        match self {
            Family::Kl => 1.0 / x,
            Family::ReverseKl => 1.0 / (x * x),
            _ => {
                let a = self.power().unwrap();
                x.powf((a - 3.0) / 2.0)
            }
        }
    }

    pub(crate) fn psi_unchecked(self, y: f64) -> f64 {
        match self {
            Family::Kl => (-y - 1.0).exp(),
            Family::ReverseKl => 1.0 / y,
            _ => {
                let a = self.power().unwrap();
                ((1.0 - a) / 2.0 * y).powf(2.0 / (a - 1.0))
            }
        }
    }

    /// `psi^{-1}(x) = -phi'(x)`.
    pub fn psi_inverse(self, x: f64) -> Result<f64> {
        Ok(-self.phi_prime(x)?)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::Kl => f.pad("kl"),
            Family::ReverseKl => f.pad("rkl"),
            Family::Hellinger => f.pad("hellinger"),
            Family::Alpha(a) => f.pad(&format!("alpha:{a}")),
        }
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "kl" => Ok(Family::Kl),
            "rkl" => Ok(Family::ReverseKl),
            "hellinger" => Ok(Family::Hellinger),
            other => {
                let value = other
                    .strip_prefix("alpha:")
                    .ok_or_else(|| Error::Config(format!("unknown regularizer `{other}`")))?;
                let a: f64 = value
                    .parse()
                    .map_err(|_| Error::Config(format!("bad alpha value `{value}`")))?;
                Family::alpha(a)
            }
        }
    }
}

/// A regularizer family together with its prior `mu`.
#[derive(Clone, Debug, PartialEq)]
pub struct RegularizerSpec {
    pub family: Family,
    prior: Table,
}

impl RegularizerSpec {
    /// Uniform prior `mu[s][a] = 1/|A|`.
    pub fn uniform(family: Family, num_states: usize, num_actions: usize) -> Self {
        Self {
            family,
            prior: Table::filled(num_states, num_actions, 1.0 / num_actions as f64),
        }
    }

    /// Arbitrary prior; must be strictly positive and row-stochastic.
    pub fn with_prior(family: Family, prior: Table) -> Result<Self> {
        crate::table::check_stochastic(&prior, true)
            .map_err(|e| Error::Config(format!("prior: {e}")))?;
        Ok(Self { family, prior })
    }

    pub fn prior(&self) -> &Table {
        &self.prior
    }

    #[inline]
    pub fn mu(&self, s: usize, a: usize) -> f64 {
        self.prior.get(s, a)
    }

    pub(crate) fn check_policy_shape(&self, policy: &Policy) -> Result<()> {
        policy.check_shape(&self.prior)
    }

    /// Dual coordinate `phi'(pi/mu)` of a single entry, with the policy floor.
    #[inline]
    pub(crate) fn dual_coordinate(&self, s: usize, a: usize, p: f64) -> f64 {
        let mu = self.mu(s, a);
        self.family.phi_prime_unchecked(p.max(POLICY_FLOOR) / mu)
    }

    /// `h_pi[s] = sum_a mu phi(pi/mu)`.
    pub fn entropy(&self, policy: &Policy) -> Result<Vec<f64>> {
        self.check_policy_shape(policy)?;
        Ok((0..policy.num_states())
            .map(|s| {
                policy
                    .row(s)
                    .iter()
                    .enumerate()
                    .map(|(a, &p)| {
                        let mu = self.mu(s, a);
                        mu * self.family.phi_unchecked(p.max(POLICY_FLOOR) / mu)
                    })
                    .sum()
            })
            .collect())
    }

    /// `theta[s][a] = phi'(pi[s][a] / mu[s][a])`.
    pub fn theta_of_policy(&self, policy: &Policy) -> Result<ThetaTable> {
        self.check_policy_shape(policy)?;
        let mut theta = Table::zeros(policy.num_states(), policy.num_actions());
        for s in 0..policy.num_states() {
            for (a, &p) in policy.row(s).iter().enumerate() {
                theta.set(s, a, self.family.phi_prime(p / self.mu(s, a))?);
            }
        }
        Ok(ThetaTable(theta))
    }

    /// `mu[s][a] psi(-theta[s][a])` entrywise. Rows are not renormalized.
    pub fn policy_of_theta(&self, theta: &ThetaTable) -> Result<Table> {
        if theta.0.rows() != self.prior.rows() || theta.0.cols() != self.prior.cols() {
            return Err(Error::Dimension("theta and prior shapes differ".into()));
        }
        let mut out = Table::zeros(theta.0.rows(), theta.0.cols());
        for s in 0..theta.0.rows() {
            for a in 0..theta.0.cols() {
                out.set(s, a, self.mu(s, a) * self.family.psi(-theta.0.get(s, a))?);
            }
        }
        Ok(out)
    }
}

/// Dual coordinates `theta = phi'(pi/mu)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ThetaTable(pub Table);

#[cfg(test)]
mod tests {
    use super::*;

    const FAMILIES: [Family; 5] = [
        Family::Kl,
        Family::ReverseKl,
        Family::Hellinger,
        Family::Alpha(-3.0),
        Family::Alpha(0.5),
    ];

    #[test]
    fn phi_vanishes_at_one() {
        for f in FAMILIES {
            assert_eq!(f.phi(1.0).unwrap(), 0.0, "{f}");
        }
    }

    #[test]
    fn closed_form_values() {
        let a3 = Family::Alpha(-3.0);
        assert!((a3.phi(2.0).unwrap() + 0.25).abs() < 1e-15);
        assert!((a3.phi_prime(1.0).unwrap() + 0.5).abs() < 1e-15);
        assert!((a3.psi(0.5).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(Family::ReverseKl.phi_prime(2.0).unwrap(), -0.5);
        assert_eq!(Family::ReverseKl.psi(2.0).unwrap(), 0.5);
        assert_eq!(Family::Kl.psi(-1.0).unwrap(), 1.0);
        assert_eq!(Family::Hellinger.psi(2.0).unwrap(), 1.0);
    }

    #[test]
    fn domain_errors() {
        for f in FAMILIES {
            assert!(f.phi(0.0).is_err());
            assert!(f.phi_prime(-1.0).is_err());
        }
        assert!(Family::ReverseKl.psi(0.0).is_err());
        assert!(Family::Hellinger.psi(-1.0).is_err());
        assert!(Family::Kl.psi(-1e6).is_ok());
    }

    #[test]
    fn psi_inverts_minus_phi_prime_on_grid() {
        for f in FAMILIES {
            for i in 0..=160 {
                let x = 10f64.powf(-8.0 + i as f64 * 0.1);
                let back = f.psi(-f.phi_prime(x).unwrap()).unwrap();
                assert!(((back - x) / x).abs() < 1e-10, "{f} at {x}: {back}");
                assert!(f.phi_second(x).unwrap() > 0.0);
            }
            assert!(f.phi_prime(1e-12).unwrap() < -10.0);
        }
    }

    #[test]
    fn parses_cli_names() {
        assert_eq!("kl".parse::<Family>().unwrap(), Family::Kl);
        assert_eq!("rkl".parse::<Family>().unwrap(), Family::ReverseKl);
        assert_eq!("hellinger".parse::<Family>().unwrap(), Family::Hellinger);
        assert_eq!("alpha:-3".parse::<Family>().unwrap(), Family::Alpha(-3.0));
        assert!("alpha:1".parse::<Family>().is_err());
        assert!("alpha:-1".parse::<Family>().is_err());
        assert!("tsallis".parse::<Family>().is_err());
        let name = Family::Alpha(-3.0).to_string();
        assert_eq!(name.parse::<Family>().unwrap(), Family::Alpha(-3.0));
    }

    #[test]
    fn entropy_zero_at_prior() {
        for f in FAMILIES {
            let spec = RegularizerSpec::uniform(f, 3, 4);
            let h = spec.entropy(&Policy::uniform(3, 4)).unwrap();
            assert!(h.iter().all(|x| x.abs() < 1e-15), "{f}: {h:?}");
        }
    }

    #[test]
    fn kl_entropy_of_near_deterministic_row() {
        let spec = RegularizerSpec::uniform(Family::Kl, 1, 4);
        let eps = 1e-14;
        let p = Policy::from_rows(&[vec![1.0 - 3.0 * eps, eps, eps, eps]]).unwrap();
        let h = spec.entropy(&p).unwrap();
        assert!((h[0] - 4f64.ln()).abs() < 1e-11);
    }

    #[test]
    fn hellinger_entropy_direct_formula() {
        let spec = RegularizerSpec::uniform(Family::Hellinger, 1, 2);
        let p = Policy::from_rows(&[vec![0.9, 0.1]]).unwrap();
        let h = spec.entropy(&p).unwrap();
        // sum_a mu * 4 (1 - sqrt(pi/mu)) = 4 - 4 sum_a sqrt(mu pi)
        let expected = 4.0 - 4.0 * ((0.5f64 * 0.9).sqrt() + (0.5f64 * 0.1).sqrt());
        assert!((h[0] - expected).abs() < 1e-15);
        assert!(h[0] > 0.0);
    }

    #[test]
    fn theta_round_trip() {
        let spec = RegularizerSpec::uniform(Family::Kl, 2, 3);
        let theta = spec.theta_of_policy(&Policy::uniform(2, 3)).unwrap();
        assert!(theta.0.as_slice().iter().all(|&t| (t - 1.0).abs() < 1e-15));

        let a3 = RegularizerSpec::uniform(Family::Alpha(-3.0), 2, 3);
        let theta = a3.theta_of_policy(&Policy::uniform(2, 3)).unwrap();
        assert!(theta.0.as_slice().iter().all(|&t| (t + 0.5).abs() < 1e-15));

        let p = Policy::from_rows(&[vec![0.2, 0.3, 0.5], vec![0.01, 0.98, 0.01]]).unwrap();
        for f in FAMILIES {
            let spec = RegularizerSpec::uniform(f, 2, 3);
            let back = spec
                .policy_of_theta(&spec.theta_of_policy(&p).unwrap())
                .unwrap();
            for (x, y) in back.as_slice().iter().zip(p.table().as_slice()) {
                assert!((x - y).abs() < 1e-12, "{f}");
            }
        }
    }
}
