//! Coulomb static-friction estimation.
//!
//! The coefficient is recovered from the net contact force right before slip:
//! with `alpha` the angle between the force direction and the surface normal,
//! slip begins at the friction-cone boundary where `mu = tan(alpha)`, so
//!
//! ```text
//! mu = tan(acos(f_slip_hat . s_n))
//! ```
//!
//! Two simulated procedures produce `f_slip`: a force servo that bleeds off
//! the normal component at constant tangential load until the Coulomb
//! inequality trips, and a tilting-platform oracle that rotates gravity past
//! the cone boundary. Both bound the true coefficient from below within one
//! quantization step.

use rand::rngs::StdRng;
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::hull::ConvexHull;
use crate::se3::Vec3;

/// A contact patch with its true coefficient (simulation ground truth).
#[derive(Debug, Clone, Copy)]
pub struct ContactSurface {
    /// Unit surface normal, pointing against the pressing force.
    pub normal: Vec3,
    /// True static friction coefficient.
    pub mu_true: f64,
    /// Optional compliance: rotates the effective normal by
    /// `warp * |f|` radians toward the tangent, emulating surfaces that give
    /// under load. Off (None) by default.
    pub warp: Option<f64>,
}

impl ContactSurface {
    pub fn new(normal: Vec3, mu_true: f64) -> Result<Self> {
        if (normal.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "surface normal must be unit length, |n| = {}",
                normal.norm()
            )));
        }
        if mu_true <= 0.0 {
            return Err(Error::InvalidConfig("mu_true must be positive".into()));
        }
        Ok(ContactSurface {
            normal,
            mu_true,
            warp: None,
        })
    }
}

/// Force-servo schedule: all forces in newtons.
#[derive(Debug, Clone, Copy)]
pub struct ServoConfig {
    pub initial_normal: f64,
    pub tangent_force: f64,
    pub normal_decrement: f64,
    pub noise_sigma: f64,
    pub max_steps: usize,
    pub normal_floor: f64,
}

impl Default for ServoConfig {
    fn default() -> Self {
        ServoConfig {
            initial_normal: 5.0,
            tangent_force: 1.0,
            normal_decrement: 0.01,
            noise_sigma: 0.0,
            max_steps: 10_000,
            normal_floor: 0.05,
        }
    }
}

impl ServoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.initial_normal < 0.0
            || self.tangent_force < 0.0
            || self.normal_floor < 0.0
            || self.noise_sigma < 0.0
        {
            return Err(Error::InvalidConfig("servo forces must be nonnegative".into()));
        }
        if self.normal_decrement <= 0.0 {
            return Err(Error::InvalidConfig("normal decrement must be positive".into()));
        }
        Ok(())
    }
}

/// Outcome of one servo run.
#[derive(Debug, Clone, Copy)]
pub struct SlipEvent {
    /// Measured net force at the last step before slip.
    pub f_slip: Vec3,
    pub step: usize,
    pub slipped: bool,
}

/// `mu = tan(acos(f_hat . s_n))`, with the dot product clamped to `[-1, 1]`.
/// The force must press into the surface: `f_hat . s_n > 0`.
pub fn estimate_mu(f_slip: &Vec3, s_n: &Vec3) -> Result<f64> {
    let norm = f_slip.norm();
    if norm < 1e-9 {
        return Err(Error::DegenerateForce(norm));
    }
    let d = (f_slip.dot(s_n) / norm).clamp(-1.0, 1.0);
    if d <= 0.0 {
        return Err(Error::NonPressingForce(d));
    }
    Ok(d.acos().tan())
}

/// Reduce the normal force step by step at constant tangential load until the
/// Coulomb inequality `|f_t| > mu |f_n|` trips. Returns the (noise-perturbed)
/// force recorded at the last non-slipping step. `slipped` is false if the
/// normal floor is reached first.
pub fn servo_until_slip(surface: &ContactSurface, cfg: &ServoConfig, seed: u64) -> Result<SlipEvent> {
    cfg.validate()?;
    let mut rng = StdRng::seed_from_u64(seed);
    let noise = Normal::new(0.0, cfg.noise_sigma.max(f64::MIN_POSITIVE)).unwrap();
    let tangent_dir = tangent_basis(&surface.normal);

    let measure = |n_mag: f64, rng: &mut StdRng| -> Vec3 {
        let f = n_mag * surface.normal + cfg.tangent_force * tangent_dir;
        if cfg.noise_sigma > 0.0 {
            f + Vec3::new(noise.sample(rng), noise.sample(rng), noise.sample(rng))
        } else {
            f
        }
    };

    let mut prev_measured = measure(cfg.initial_normal, &mut rng);
    for step in 1..=cfg.max_steps {
        let n_mag = cfg.initial_normal - step as f64 * cfg.normal_decrement;
        if n_mag < cfg.normal_floor {
            return Ok(SlipEvent {
                f_slip: prev_measured,
                step,
                slipped: false,
            });
        }
        // slip check on the true applied force, against the (possibly warped)
        // effective surface normal
        let f_true = n_mag * surface.normal + cfg.tangent_force * tangent_dir;
        let eff_normal = effective_normal(surface, &f_true);
        let f_n = f_true.dot(&eff_normal);
        let f_t = (f_true - f_n * eff_normal).norm();
        if f_t > surface.mu_true * f_n {
            return Ok(SlipEvent {
                f_slip: prev_measured,
                step,
                slipped: true,
            });
        }
        prev_measured = measure(n_mag, &mut rng);
    }
    Ok(SlipEvent {
        f_slip: prev_measured,
        step: cfg.max_steps,
        slipped: false,
    })
}

/// Tilting-platform ground-truth procedure: increase the angle between
/// gravity and the surface normal until slip, then report the midpoint of the
/// bracketing tangents `[tan(theta - step), tan(theta)]`.
pub fn slope_method_oracle(surface: &ContactSurface, angle_step: f64) -> Result<f64> {
    if angle_step <= 0.0 {
        return Err(Error::InvalidConfig("angle step must be positive".into()));
    }
    let max_angle = std::f64::consts::FRAC_PI_2;
    let mut k = 1usize;
    loop {
        let theta = k as f64 * angle_step;
        if theta >= max_angle {
            return Err(Error::InvalidConfig(format!(
                "no slip before 90 degrees (mu_true = {})",
                surface.mu_true
            )));
        }
        if theta.tan() > surface.mu_true {
            let prev = (k - 1) as f64 * angle_step;
            return Ok(0.5 * (prev.tan() + theta.tan()));
        }
        k += 1;
    }
}

/// Surface normal at a contact point: the nearest hull face.
pub fn surface_normal_at(hull: &ConvexHull, point: &Vec3) -> Vec3 {
    hull.nearest_face_normal(point).1
}

/// Deterministic unit vector orthogonal to `n`.
fn tangent_basis(n: &Vec3) -> Vec3 {
    let seed = if n.x.abs() < 0.9 {
        Vec3::new(1.0, 0.0, 0.0)
    } else {
        Vec3::new(0.0, 1.0, 0.0)
    };
    let t = seed - n.dot(&seed) * n;
    t / t.norm()
}

fn effective_normal(surface: &ContactSurface, f: &Vec3) -> Vec3 {
    match surface.warp {
        None => surface.normal,
        Some(w) => {
            // tilt toward the tangential load direction
            let tangent = tangent_basis(&surface.normal);
            let angle = w * f.norm();
            let n = surface.normal * angle.cos() + tangent * angle.sin();
            n / n.norm()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn surface(mu: f64) -> ContactSurface {
        ContactSurface::new(Vec3::new(0.0, 0.0, 1.0), mu).unwrap()
    }

    #[test]
    fn mu_at_45_degrees_is_one() {
        let f = Vec3::new(1.0, 0.0, 1.0);
        let mu = estimate_mu(&f, &Vec3::new(0.0, 0.0, 1.0)).unwrap();
        assert_relative_eq!(mu, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn mu_parallel_force_is_zero() {
        let f = Vec3::new(0.0, 0.0, 2.5);
        let mu = estimate_mu(&f, &Vec3::new(0.0, 0.0, 1.0)).unwrap();
        assert!(mu.abs() < 1e-7);
    }

    #[test]
    fn mu_inverse_construction() {
        for mu in [0.05, 0.3, 0.5, 1.0, 2.0, 10.0] {
            let f = Vec3::new(mu, 0.0, 1.0); // tan(angle to z) = mu
            let est = estimate_mu(&f, &Vec3::new(0.0, 0.0, 1.0)).unwrap();
            assert_relative_eq!(est, mu, epsilon = 1e-12 * (1.0 + mu * mu));
        }
    }

    #[test]
    fn mu_scale_invariant() {
        let n = Vec3::new(0.0, 0.0, 1.0);
        let f = Vec3::new(0.4, -0.3, 1.2);
        let a = estimate_mu(&f, &n).unwrap();
        let b = estimate_mu(&(417.0 * f), &n).unwrap();
        assert_relative_eq!(a, b, epsilon = 1e-13);
    }

    #[test]
    fn mu_rejects_degenerate_and_pulling_forces() {
        let n = Vec3::new(0.0, 0.0, 1.0);
        assert!(matches!(
            estimate_mu(&Vec3::new(0.0, 0.0, 1e-12), &n),
            Err(Error::DegenerateForce(_))
        ));
        assert!(matches!(
            estimate_mu(&Vec3::new(0.0, 0.0, -1.0), &n),
            Err(Error::NonPressingForce(_))
        ));
    }

    #[test]
    fn servo_noiseless_brackets_mu() {
        let cfg = ServoConfig::default();
        let ev = servo_until_slip(&surface(0.8), &cfg, 0).unwrap();
        assert!(ev.slipped);
        let est = estimate_mu(&ev.f_slip, &Vec3::new(0.0, 0.0, 1.0)).unwrap();
        // last pre-slip normal is 1.25 or 1.26 depending on rounding
        assert!(est <= 0.8 + 1e-12 && est >= 1.0 / 1.26 - 1e-12, "est {est}");
    }

    #[test]
    fn servo_no_slip_below_floor() {
        let cfg = ServoConfig {
            normal_floor: 0.5,
            ..Default::default()
        };
        let ev = servo_until_slip(&surface(10.0), &cfg, 0).unwrap();
        assert!(!ev.slipped);
    }

    #[test]
    fn servo_estimate_never_exceeds_truth_plus_allowance() {
        // the initial normal load must start above the slip boundary
        let cfg = ServoConfig {
            initial_normal: 15.0,
            normal_floor: 0.01,
            ..Default::default()
        };
        for mu in [0.1, 0.25, 0.5, 0.8, 1.0, 1.2, 1.5] {
            let ev = servo_until_slip(&surface(mu), &cfg, 0).unwrap();
            assert!(ev.slipped, "mu {mu} never slipped");
            let est = estimate_mu(&ev.f_slip, &Vec3::new(0.0, 0.0, 1.0)).unwrap();
            // noiseless: estimate bounds truth from below within one decrement
            let n_slip = cfg.tangent_force / mu;
            let quantum = mu - cfg.tangent_force / (n_slip + 2.0 * cfg.normal_decrement);
            assert!(est <= mu + 1e-9, "mu {mu} est {est}");
            assert!(est >= mu - quantum - 1e-9, "mu {mu} est {est} quantum {quantum}");
        }
    }

    #[test]
    fn servo_error_shrinks_with_decrement() {
        let n = Vec3::new(0.0, 0.0, 1.0);
        let mut last_err = f64::INFINITY;
        for dec in [0.04, 0.02, 0.01, 0.005] {
            let cfg = ServoConfig {
                normal_decrement: dec,
                ..Default::default()
            };
            let ev = servo_until_slip(&surface(0.5), &cfg, 0).unwrap();
            let est = estimate_mu(&ev.f_slip, &n).unwrap();
            let err = (est - 0.5).abs();
            assert!(err <= last_err + 1e-12);
            last_err = err;
        }
        assert!(last_err < 0.002);
    }

    #[test]
    fn servo_noisy_median_error_small() {
        let n = Vec3::new(0.0, 0.0, 1.0);
        let cfg = ServoConfig {
            noise_sigma: 0.02,
            ..Default::default()
        };
        let mut errs: Vec<f64> = (0..10)
            .map(|seed| {
                let ev = servo_until_slip(&surface(0.5), &cfg, seed).unwrap();
                (estimate_mu(&ev.f_slip, &n).unwrap() - 0.5).abs()
            })
            .collect();
        errs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = 0.5 * (errs[4] + errs[5]);
        assert!(median < 0.02, "median error {median}");
    }

    #[test]
    fn slope_oracle_quantization() {
        let est = slope_method_oracle(&surface(1.0), 1e-4).unwrap();
        assert!((est - 1.0).abs() < 1e-4, "est {est}");
    }

    #[test]
    fn slope_oracle_tiny_mu() {
        let est = slope_method_oracle(&surface(1e-6), 1e-3).unwrap();
        assert!(est < 1e-3);
    }

    #[test]
    fn servo_and_slope_agree_within_quantization() {
        let n = Vec3::new(0.0, 0.0, 1.0);
        for mu in [0.2, 0.5, 0.9] {
            let cfg = ServoConfig {
                normal_decrement: 1e-3,
                ..Default::default()
            };
            let ev = servo_until_slip(&surface(mu), &cfg, 0).unwrap();
            let servo_est = estimate_mu(&ev.f_slip, &n).unwrap();
            let slope_est = slope_method_oracle(&surface(mu), 1e-3).unwrap();
            // both sit within one quantization step of the truth; allow the
            // slope secant factor on top of max(decrement, step)
            let bound = (1.0 + mu * mu) * 2e-3;
            assert!(
                (servo_est - slope_est).abs() < bound,
                "mu {mu}: servo {servo_est} slope {slope_est}"
            );
        }
    }

    #[test]
    fn warp_biases_estimate() {
        let mut s = surface(0.5);
        s.warp = Some(0.02);
        let cfg = ServoConfig::default();
        let ev = servo_until_slip(&s, &cfg, 0).unwrap();
        let est = estimate_mu(&ev.f_slip, &s.normal).unwrap();
        // the warped surface slips away from the nominal boundary
        assert!((est - 0.5).abs() > 0.01, "warp had no effect: {est}");
    }

    #[test]
    fn normal_lookup_on_cube() {
        let hull = ConvexHull::axis_aligned_box(Vec3::zeros(), Vec3::new(0.5, 0.5, 0.5));
        let n = surface_normal_at(&hull, &Vec3::new(0.5 + 1e-9, 0.01, -0.02));
        assert_relative_eq!(n, Vec3::new(1.0, 0.0, 0.0), epsilon = 1e-12);
    }
}
