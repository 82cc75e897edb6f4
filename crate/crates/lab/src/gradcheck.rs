//! Central finite-difference check of the analytic gradients.
//!
//! Every real coordinate of every layer is perturbed by `±h`; over ℂ the
//! real and imaginary parts are perturbed separately and compared with the
//! real and imaginary parts of `∇ = ∂/∂Re + i∂/∂Im`. The per-component
//! error is `|g − fd| / max(|g|, |fd|, 1)`.

use dmf_core::dynamics::{gradient, loss, DynConfig, LayerStack, TargetSpec};
use dmf_core::ensembles::gaussian_matrix;
use dmf_core::{Complex64, Field, FieldTag, Real, SeededRng};

use crate::{LabError, LabResult};

/// Finite-difference step.
pub const FD_STEP: f64 = 1e-6;
/// Pass threshold on the maximum relative error.
pub const FD_TOL: f64 = 1e-6;
/// Scale of the random layers and target.
const DRAW_SCALE: f64 = 0.5;

#[derive(Clone, Debug, PartialEq)]
pub struct GradcheckReport {
    pub d: usize,
    pub n_layers: usize,
    pub field: FieldTag,
    pub reg_a: f64,
    pub seed: u64,
    pub components: usize,
    pub max_rel_error: f64,
    pub pass: bool,
}

impl GradcheckReport {
    pub fn line(&self) -> String {
        format!(
            "gradcheck field={} d={} N={} a={} seed={} components={} max_rel_error={:e} {}",
            self.field,
            self.d,
            self.n_layers,
            self.reg_a,
            self.seed,
            self.components,
            self.max_rel_error,
            if self.pass { "PASS" } else { "FAIL" }
        )
    }
}

fn rel_err(g: f64, fd: f64) -> f64 {
    (g - fd).abs() / g.abs().max(fd.abs()).max(1.0)
}

/// Checks the total-loss gradient of `stack` against central differences.
/// Returns `(components checked, max relative error)`.
pub fn check_stack<T: Field>(stack: &LayerStack<T>, target: &TargetSpec<T>, reg_a: f64) -> LabResult<(usize, f64)> {
    let cfg = DynConfig::gd(T::RealField::lit(reg_a), T::RealField::lit(1.0));
    let grads = gradient(stack, target, &cfg)?;
    let h = T::RealField::lit(FD_STEP);
    let total = |layers: Vec<_>| -> LabResult<f64> {
        Ok(loss(&LayerStack::new(layers)?, target, &cfg)?.total.as_f64())
    };
    let parts: &[T] = match T::TAG {
        FieldTag::Real => &[T::one()][..],
        FieldTag::Complex => &[T::one(), T::from_parts(T::RealField::lit(0.0), T::RealField::lit(1.0))][..],
    };
    let (mut count, mut worst) = (0usize, 0.0f64);
    for j in 0..stack.n_layers() {
        for idx in 0..stack.dim() * stack.dim() {
            for (p, &dir) in parts.iter().enumerate() {
                let mut plus = stack.layers().to_vec();
                let mut minus = stack.layers().to_vec();
                plus[j][idx] += dir * T::from_real(h);
                minus[j][idx] -= dir * T::from_real(h);
                let fd = (total(plus)? - total(minus)?) / (2.0 * FD_STEP);
                let g = grads[j][idx].to_complex();
                let analytic = if p == 0 { g.re } else { g.im }.as_f64();
                worst = worst.max(rel_err(analytic, fd));
                count += 1;
            }
        }
    }
    Ok((count, worst))
}

fn run_typed<T: Field>(d: usize, n_layers: usize, reg_a: f64, seed: u64) -> LabResult<(usize, f64)> {
    let rng = SeededRng::new(seed);
    let scale = T::from_real(T::RealField::lit(DRAW_SCALE));
    let layers = (0..n_layers)
        .map(|j| gaussian_matrix::<T>(d, &mut rng.substream(j as u64)) * scale)
        .collect();
    let sigma = gaussian_matrix::<T>(d, &mut rng.substream(n_layers as u64));
    check_stack(&LayerStack::new(layers)?, &TargetSpec::new(sigma)?, reg_a)
}

/// Random Gaussian stack (scale 0.5) and random general target from `seed`.
pub fn gradcheck(d: usize, n_layers: usize, field: FieldTag, reg_a: f64, seed: u64) -> LabResult<GradcheckReport> {
    if d == 0 || d > 6 {
        return Err(LabError::Config(format!("gradcheck needs 1 <= d <= 6, got {d}")));
    }
    if !(reg_a >= 0.0) {
        return Err(LabError::Config("reg_a must be >= 0".into()));
    }
    let (components, max_rel_error) = match field {
        FieldTag::Real => run_typed::<f64>(d, n_layers, reg_a, seed)?,
        FieldTag::Complex => run_typed::<Complex64>(d, n_layers, reg_a, seed)?,
    };
    Ok(GradcheckReport {
        d,
        n_layers,
        field,
        reg_a,
        seed,
        components,
        max_rel_error,
        pass: max_rel_error < FD_TOL,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn real_a0_passes() {
        let r = gradcheck(4, 4, FieldTag::Real, 0.0, 1).unwrap();
        assert_eq!(r.components, 64);
        assert!(r.pass, "{}", r.line());
    }

    #[test]
    fn complex_a1_passes() {
        let r = gradcheck(4, 4, FieldTag::Complex, 1.0, 2).unwrap();
        assert_eq!(r.components, 128);
        assert!(r.pass, "{}", r.line());
    }

    #[test]
    fn zero_stack_is_vacuous() {
        let stack = LayerStack::<Complex64>::zeros(3, 4).unwrap();
        let target = TargetSpec::scaled_identity(3, 1.0);
        let (n, err) = check_stack(&stack, &target, 1.0).unwrap();
        assert_eq!(n, 72);
        assert!(err < 1e-12);
    }

    #[test]
    fn relative_error_metric() {
        assert!((rel_err(0.0, 3.0) - 1.0).abs() < 1e-15);
        assert!((rel_err(1e-3, 2e-3) - 1e-3).abs() < 1e-15);
        assert_eq!(rel_err(0.5, 0.5), 0.0);
    }

    #[test]
    fn rejects_large_d() {
        assert!(gradcheck(7, 4, FieldTag::Real, 0.0, 0).is_err());
    }
}
