//! Fixed-support categorical return distributions.

use super::AgentError;
use crate::Scalar;

/// Evenly spaced atoms `v_min + i * (v_max - v_min) / (n - 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Support<F> {
    atoms: Vec<F>,
    v_min: F,
    v_max: F,
    delta: F,
}

impl<F: Scalar> Support<F> {
    pub fn new(v_min: f64, v_max: f64, n: usize) -> Result<Self, AgentError> {
        if n < 2 || !(v_max > v_min) || !v_min.is_finite() || !v_max.is_finite() {
            return Err(AgentError::InvalidConfig(format!(
                "support needs n >= 2 and v_min < v_max, got n={n}, [{v_min}, {v_max}]"
            )));
        }
        let delta = (v_max - v_min) / (n - 1) as f64;
        Ok(Self {
            atoms: (0..n).map(|i| F::of(v_min + i as f64 * delta)).collect(),
            v_min: F::of(v_min),
            v_max: F::of(v_max),
            delta: F::of(delta),
        })
    }

    pub fn atoms(&self) -> &[F] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn bin_width(&self) -> F {
        self.delta
    }

    pub fn bounds(&self) -> (F, F) {
        (self.v_min, self.v_max)
    }

    /// Split `mass` at value `x` between its two neighbouring atoms,
    /// clipping `x` into the support first.
    pub(crate) fn deposit(&self, out: &mut [F], x: F, mass: F) {
        let n = self.atoms.len();
        let x = x.max(self.v_min).min(self.v_max);
        let b = ((x - self.v_min) / self.delta)
            .max(F::zero())
            .min(F::of((n - 1) as f64));
        let lower = b.floor();
        let upper = b.ceil();
        let l = lower.to_usize().unwrap_or(0).min(n - 1);
        let u = upper.to_usize().unwrap_or(0).min(n - 1);
        if l == u {
            out[l] += mass;
        } else {
            out[l] += mass * (upper - b);
            out[u] += mass * (b - lower);
        }
    }
}

/// Project weighted atoms onto the support by linear mass splitting.
pub fn project_categorical<F: Scalar>(
    target_atoms: &[F],
    target_probs: &[F],
    support: &Support<F>,
) -> Vec<F> {
    let mut out = vec![F::zero(); support.len()];
    for (&x, &p) in target_atoms.iter().zip(target_probs) {
        support.deposit(&mut out, x, p);
    }
    out
}

/// `sum_i z_i p_i`
pub fn mean_of<F: Scalar>(probs: &[F], support: &Support<F>) -> F {
    support.atoms.iter().zip(probs).map(|(&z, &p)| z * p).sum()
}

/// Value-at-risk: the smallest atom whose cumulative probability reaches
/// `rho`. Cumulative sums are compared with a few ulps of slack so that
/// `rho = 1` lands on the largest atom carrying mass.
pub fn var_of_dist<F: Scalar>(probs: &[F], support: &Support<F>, rho: F) -> F {
    let slack = F::epsilon() * F::of(8.0 * probs.len() as f64);
    let mut cdf = F::zero();
    for (&z, &p) in support.atoms.iter().zip(probs) {
        cdf += p;
        if cdf >= rho - slack {
            return z;
        }
    }
    support.v_max
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn default_support() -> Support<f64> {
        Support::new(-5000.0, 5000.0, 11).unwrap()
    }

    #[test]
    fn atoms_match_grid() {
        let s = default_support();
        assert_eq!(s.atoms()[0], -5000.0);
        assert_eq!(s.atoms()[3], -2000.0);
        assert_eq!(s.atoms()[10], 5000.0);
        assert!(Support::<f64>::new(0.0, 1.0, 1).is_err());
        assert!(Support::<f64>::new(1.0, 1.0, 3).is_err());
    }

    #[test]
    fn on_grid_atom_is_indicator() {
        let s = default_support();
        let p = project_categorical(&[-2000.0], &[1.0], &s);
        let mut e = vec![0.0; 11];
        e[3] = 1.0;
        assert_eq!(p, e);
    }

    #[test]
    fn midpoint_splits_evenly() {
        let p = project_categorical(&[-4500.0], &[1.0], &default_support());
        assert_eq!(&p[..3], &[0.5, 0.5, 0.0]);
    }

    #[test]
    fn beyond_support_is_clipped() {
        let p = project_categorical(&[9000.0], &[1.0], &default_support());
        assert_eq!(p[10], 1.0);
        let p = project_categorical(&[-1e9], &[1.0], &default_support());
        assert_eq!(p[0], 1.0);
    }

    #[test]
    fn var_of_uniform() {
        let s = default_support();
        let u = vec![1.0 / 11.0; 11];
        assert_eq!(var_of_dist(&u, &s, 0.1), -4000.0);
        assert_eq!(var_of_dist(&u, &s, 1.0), 5000.0);
    }

    #[test]
    fn var_full_confidence_ignores_empty_top() {
        let s = default_support();
        let mut p = vec![0.0; 11];
        p[2] = 0.3;
        p[6] = 0.7;
        assert_eq!(var_of_dist(&p, &s, 1.0), 1000.0);
    }

    #[test]
    fn var_of_point_mass() {
        let s = default_support();
        for k in 0..11 {
            let mut p = vec![0.0; 11];
            p[k] = 1.0;
            for rho in [0.01, 0.1, 0.5, 1.0] {
                assert_eq!(var_of_dist(&p, &s, rho), s.atoms()[k]);
            }
        }
    }

    proptest! {
        #[test]
        fn projection_conserves_mass_and_mean(
            atoms in prop::collection::vec(-8000.0f64..8000.0, 1..40),
            weights in prop::collection::vec(0.01f64..1.0, 40),
        ) {
            let s = default_support();
            let w = &weights[..atoms.len()];
            let total: f64 = w.iter().sum();
            let probs: Vec<f64> = w.iter().map(|x| x / total).collect();
            let out = project_categorical(&atoms, &probs, &s);
            prop_assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            let clipped_mean: f64 = atoms.iter().zip(&probs).map(|(a, p)| a.clamp(-5000.0, 5000.0) * p).sum();
            prop_assert!((mean_of(&out, &s) - clipped_mean).abs() <= 500.0);
        }

        #[test]
        fn var_is_monotone_in_rho(w in prop::collection::vec(0.0f64..1.0, 11), r1 in 0.001f64..1.0, r2 in 0.001f64..1.0) {
            let total: f64 = w.iter().sum::<f64>() + 1e-9;
            let p: Vec<f64> = w.iter().map(|x| x / total).collect();
            let s = default_support();
            let (lo, hi) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
            prop_assert!(var_of_dist(&p, &s, lo) <= var_of_dist(&p, &s, hi));
        }
    }
}
