//! Random matrix sampling and circular-ensemble densities.
//!
//! Substream layout used by the initializers (labels passed to
//! [`SeededRng::substream`]):
//!
//! * balanced init: `0` → `G` (or `0/1`, `0/2` → `Q_G`, `P_G` when the
//!   spectrum of `G` is pinned), `1 + k` → `Q_{k,k+1}` for `k = 0..=N`;
//! * random init: `j` → `W_j` for `j = 1..=N`.

use std::f64::consts::PI;

use crate::dynamics::LayerStack;
use nalgebra::ComplexField;
use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::rng::SeededRng;
use crate::scalar::{Field, FieldTag, Real};

/// Entries i.i.d. `N(0,1)_𝔽` (real/imaginary parts `N(0,½)` over ℂ), drawn
/// row by row.
pub fn gaussian_matrix<T: Field>(d: usize, rng: &mut SeededRng) -> Mat<T> {
    let mut m = Mat::<T>::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            m[(i, j)] = T::standard_normal(rng);
        }
    }
    m
}

/// Haar-distributed unitary (ℂ) or orthogonal (ℝ) matrix: QR of a Gaussian
/// matrix with the phases of `diag(R)` moved into `Q` so that `R` has a
/// positive diagonal.
pub fn haar_unitary<T: Field>(d: usize, rng: &mut SeededRng) -> Mat<T> {
    loop {
        let g = gaussian_matrix::<T>(d, rng);
        let qr = g.qr();
        let r = qr.r();
        let mut q = qr.q();
        // A zero pivot has probability zero; redraw rather than guess a phase.
        if (0..d).any(|k| r[(k, k)].modulus() == T::RealField::zero()) {
            continue;
        }
        for k in 0..d {
            let phase = r[(k, k)].unit_phase();
            q.column_mut(k).scale_mut_by(phase);
        }
        return q;
    }
}

trait ScaleBy<T> {
    fn scale_mut_by(&mut self, s: T);
}

impl<T: Field, S> ScaleBy<T> for nalgebra::Matrix<T, nalgebra::Dyn, nalgebra::U1, S>
where
    S: nalgebra::StorageMut<T, nalgebra::Dyn, nalgebra::U1>,
{
    fn scale_mut_by(&mut self, s: T) {
        for z in self.iter_mut() {
            *z *= s;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitKind {
    RandomGaussian,
    BalancedGaussian,
}

/// Requested sign of `det(W(0))` (equivalently `det(UᵀV)`) for real
/// balanced initialization.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DetSign {
    Plus,
    Minus,
}

impl DetSign {
    pub fn value(self) -> f64 {
        match self {
            DetSign::Plus => 1.0,
            DetSign::Minus => -1.0,
        }
    }
}

impl std::str::FromStr for DetSign {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "plus" | "+" | "+1" | "1" => Ok(DetSign::Plus),
            "minus" | "-" | "-1" => Ok(DetSign::Minus),
            other => Err(format!("unknown det sign `{other}` (expected plus|minus)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InitScheme<T: Field> {
    pub kind: InitKind,
    pub epsilon: T::RealField,
    /// Unit-modulus layer constants `s_j`; empty means all ones.
    pub s_phases: Vec<T>,
    /// Balanced only: replace the Gaussian `G` by `Q_G·diag(spectrum)·P_Gᴴ`
    /// with Haar `Q_G`, `P_G`, pinning `Σ_w(0) = ε·diag(spectrum)`.
    pub pinned_spectrum: Option<Vec<T::RealField>>,
    /// Balanced, real field only: force the sign of `det W(0)`.
    pub det_sign: Option<DetSign>,
}

impl<T: Field> InitScheme<T> {
    pub fn random(epsilon: T::RealField) -> Self {
        Self {
            kind: InitKind::RandomGaussian,
            epsilon,
            s_phases: Vec::new(),
            pinned_spectrum: None,
            det_sign: None,
        }
    }

    pub fn balanced(epsilon: T::RealField) -> Self {
        Self {
            kind: InitKind::BalancedGaussian,
            ..Self::random(epsilon)
        }
    }

    fn phase(&self, j: usize) -> T {
        self.s_phases.get(j - 1).copied().unwrap_or_else(T::one)
    }

    pub fn validate(&self, n_layers: usize) -> Result<()> {
        if !(self.epsilon > T::RealField::zero()) {
            return Err(Error::InvalidArgument("epsilon must be > 0".into()));
        }
        if !self.s_phases.is_empty() && self.s_phases.len() != n_layers {
            return Err(Error::InvalidArgument(format!(
                "{} phases given for {n_layers} layers",
                self.s_phases.len()
            )));
        }
        for s in &self.s_phases {
            if (s.modulus() - T::RealField::one()).abs() > T::RealField::lit(1e-12) {
                return Err(Error::InvalidArgument(format!("phase {s} is not unit-modulus")));
            }
        }
        if self.det_sign.is_some() && T::TAG != FieldTag::Real {
            return Err(Error::InvalidArgument(
                "det sign selection only applies to the real field".into(),
            ));
        }
        Ok(())
    }
}

fn check_layers(n_layers: usize, d: usize) -> Result<()> {
    if n_layers < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 layers, got {n_layers}"
        )));
    }
    if d == 0 {
        return Err(Error::InvalidArgument("dimension must be positive".into()));
    }
    Ok(())
}

/// Balanced Gaussian initialization: one shared `G`, `N+1` i.i.d. Haar
/// factors `Q_{k,k+1}`, and
/// `W_j = s_j ε Q_{j,j+1} G Q_{j−1,j}ᴴ` for odd `j`,
/// `W_j = s_j ε Q_{j,j+1} Gᴴ Q_{j−1,j}ᴴ` for even `j`.
pub fn balanced_init<T: Field>(
    d: usize,
    n_layers: usize,
    scheme: &InitScheme<T>,
    rng: &SeededRng,
) -> Result<LayerStack<T>> {
    check_layers(n_layers, d)?;
    scheme.validate(n_layers)?;
    if scheme.kind != InitKind::BalancedGaussian {
        return Err(Error::InvalidArgument("scheme is not balanced Gaussian".into()));
    }
    let g = match &scheme.pinned_spectrum {
        None => gaussian_matrix::<T>(d, &mut rng.substream(0)),
        Some(spec) => {
            if spec.len() != d {
                return Err(Error::InvalidArgument(format!(
                    "pinned spectrum has {} values for d = {d}",
                    spec.len()
                )));
            }
            let g_rng = rng.substream(0);
            let qg = haar_unitary::<T>(d, &mut g_rng.substream(1));
            let pg = haar_unitary::<T>(d, &mut g_rng.substream(2));
            qg * linalg::real_diag::<T>(spec) * pg.adjoint()
        }
    };
    let mut qs: Vec<Mat<T>> = (0..=n_layers)
        .map(|k| haar_unitary::<T>(d, &mut rng.substream(1 + k as u64)))
        .collect();

    let mut phases: Vec<T> = (1..=n_layers).map(|j| scheme.phase(j)).collect();
    let build = |qs: &[Mat<T>], phases: &[T]| -> Vec<Mat<T>> {
        let eps = T::from_real(scheme.epsilon);
        (1..=n_layers)
            .map(|j| {
                let core = if j % 2 == 1 { g.clone() } else { g.adjoint() };
                &qs[j] * core * qs[j - 1].adjoint() * (phases[j - 1] * eps)
            })
            .collect()
    };
    let mut layers = build(&qs, &phases);

    if let Some(want) = scheme.det_sign {
        let sign: f64 = layers
            .iter()
            .map(|w| linalg::det_sign_or_phase(w).real().as_f64())
            .product();
        if sign != want.value() {
            if d % 2 == 1 {
                phases[n_layers - 1] = -phases[n_layers - 1];
            } else {
                // -I has det +1 in even dimension; reflect Q_{N,N+1} instead.
                let mut col = qs[n_layers].column_mut(0);
                col.neg_mut();
            }
            layers = build(&qs, &phases);
        }
    }
    LayerStack::new(layers)
}

/// `W_j = ε·G_j` with i.i.d. Gaussian `G_j`.
pub fn random_init<T: Field>(
    d: usize,
    n_layers: usize,
    scheme: &InitScheme<T>,
    rng: &SeededRng,
) -> Result<LayerStack<T>> {
    check_layers(n_layers, d)?;
    scheme.validate(n_layers)?;
    if scheme.kind != InitKind::RandomGaussian {
        return Err(Error::InvalidArgument("scheme is not random Gaussian".into()));
    }
    let eps = T::from_real(scheme.epsilon);
    LayerStack::new(
        (1..=n_layers)
            .map(|j| gaussian_matrix::<T>(d, &mut rng.substream(j as u64)) * eps)
            .collect(),
    )
}

/// Dispatches on `scheme.kind`.
pub fn initialize<T: Field>(
    d: usize,
    n_layers: usize,
    scheme: &InitScheme<T>,
    rng: &SeededRng,
) -> Result<LayerStack<T>> {
    match scheme.kind {
        InitKind::BalancedGaussian => balanced_init(d, n_layers, scheme, rng),
        InitKind::RandomGaussian => random_init(d, n_layers, scheme, rng),
    }
}

/// `σ_min(W + (WWᴴ)^{1/2})`.
pub fn main_term_seed_stat<T: Field>(w: &Mat<T>) -> Result<T::RealField> {
    let root = linalg::sqrt_psd(&(w * w.adjoint()))?;
    Ok(linalg::norms(&(w + root))?.sigma_min)
}

/// Eigenangle density of CUE(d): uniform, `d/2π`.
pub fn cue_density(_theta: f64, d: usize) -> f64 {
    d as f64 / (2.0 * PI)
}

/// `sin(nθ)/sin θ` as the Chebyshev polynomial `U_{n−1}(cos θ)`, which is
/// the continuous extension through the removable points `θ = kπ`.
fn sine_ratio(n: usize, theta: f64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let c = theta.cos();
    let (mut prev, mut cur) = (1.0, 2.0 * c);
    if n == 1 {
        return prev;
    }
    for _ in 2..n {
        let next = 2.0 * c * cur - prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// Eigenangle density of CRE(d) restricted to `det = 1`,
/// `(1/2π)(d−1 + (−1)^d sin((d−1)|θ|)/sin|θ|)`, for `d ≥ 2`. For odd `d`
/// the fixed eigenvalue `+1` is not part of the density.
pub fn cre_density_det1(theta: f64, d: usize) -> f64 {
    assert!(d >= 2, "CRE density needs d >= 2");
    let sign = if d % 2 == 0 { 1.0 } else { -1.0 };
    ((d - 1) as f64 + sign * sine_ratio(d - 1, theta.abs())) / (2.0 * PI)
}

/// Arguments of the eigenvalues of a unitary matrix, in `(−π, π]`.
pub fn eigenangles<T: Field>(q: &Mat<T>) -> Result<Vec<f64>> {
    let residual = linalg::unitarity_residual(q).as_f64();
    if !(residual < 1e-8) {
        return Err(Error::NotUnitary { residual });
    }
    let ev = linalg::eigenvalues(q)?;
    ev.iter()
        .map(|z| {
            let (re, im) = (z.re.as_f64(), z.im.as_f64());
            let modulus = re.hypot(im);
            if (modulus - 1.0).abs() >= 1e-8 {
                return Err(Error::NotUnitary {
                    residual: (modulus - 1.0).abs(),
                });
            }
            let theta = im.atan2(re);
            Ok(if theta <= -PI { PI } else { theta })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::product;
    use num_complex::Complex64;

    #[test]
    fn gaussian_is_deterministic() {
        let a = gaussian_matrix::<Complex64>(4, &mut SeededRng::new(3));
        let b = gaussian_matrix::<Complex64>(4, &mut SeededRng::new(3));
        assert_eq!(a, b);
    }

    #[test]
    fn gaussian_second_moments() {
        let mut rng = SeededRng::new(1);
        let n = 100_000;
        let mut acc_c = 0.0;
        let mut acc_r = 0.0;
        for _ in 0..n {
            acc_c += gaussian_matrix::<Complex64>(5, &mut rng)[(2, 3)].norm_sqr();
            acc_r += gaussian_matrix::<f64>(1, &mut rng)[(0, 0)].powi(2);
        }
        assert!((acc_c / n as f64 - 1.0).abs() < 0.02);
        assert!((acc_r / n as f64 - 1.0).abs() < 0.02);
    }

    #[test]
    fn haar_is_unitary() {
        let rng = SeededRng::new(2);
        for k in 0..50 {
            let q = haar_unitary::<Complex64>(5, &mut rng.substream(k));
            assert!(linalg::unitarity_residual(&q) < 1e-12);
            let o = haar_unitary::<f64>(4, &mut rng.substream(100 + k));
            assert!(linalg::unitarity_residual(&o) < 1e-12);
        }
    }

    #[test]
    fn real_haar_det_balance() {
        let rng = SeededRng::new(4);
        let n = 10_000;
        let plus = (0..n)
            .filter(|&k| {
                let q = haar_unitary::<f64>(5, &mut rng.substream(k));
                linalg::det_sign_or_phase(&q) > 0.0
            })
            .count();
        let frac = plus as f64 / n as f64;
        assert!((frac - 0.5).abs() <= 0.015, "fraction {frac}");
    }

    #[test]
    fn balanced_init_is_balanced_and_has_closed_form_product() {
        let d = 5;
        let eps = 0.05;
        let rng = SeededRng::new(10);
        let phases = vec![
            Complex64::new(0.0, 1.0),
            Complex64::new(1.0, 0.0),
            Complex64::from_polar(1.0, 0.7),
            Complex64::new(-1.0, 0.0),
        ];
        let mut scheme = InitScheme::<Complex64>::balanced(eps);
        scheme.s_phases = phases.clone();
        let stack = balanced_init(d, 4, &scheme, &rng).unwrap();
        for pair in stack.layers().windows(2) {
            let delta = &pair[0] * pair[0].adjoint() - pair[1].adjoint() * &pair[1];
            assert!(delta.norm() < 1e-14);
        }
        // Rebuild the ingredients from the documented substreams.
        let g = gaussian_matrix::<Complex64>(d, &mut rng.substream(0));
        let q01 = haar_unitary::<Complex64>(d, &mut rng.substream(1));
        let q45 = haar_unitary::<Complex64>(d, &mut rng.substream(5));
        let s: Complex64 = phases.iter().product();
        let ghg = g.adjoint() * &g;
        let expected = q45 * &ghg * &ghg * q01.adjoint() * (s * eps.powi(4));
        let w = product(&stack);
        assert!((&w - &expected).norm() < 1e-12 * (1.0 + expected.norm()));
    }

    #[test]
    fn balanced_init_pinned_spectrum() {
        let eps = 0.05;
        let spec = vec![1.0, 0.8, 0.6, 0.5, 0.9];
        let mut scheme = InitScheme::<f64>::balanced(eps);
        scheme.pinned_spectrum = Some(spec.clone());
        let stack = balanced_init(5, 4, &scheme, &SeededRng::new(1)).unwrap();
        let mut want: Vec<f64> = spec.iter().map(|x| x * eps).collect();
        want.sort_by(|a, b| b.total_cmp(a));
        for w in stack.layers() {
            let s = linalg::singular_values(w).unwrap();
            for (a, b) in s.iter().zip(&want) {
                assert!((a - b).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn balanced_init_det_selection() {
        for seed in 0..8 {
            for want in [DetSign::Plus, DetSign::Minus] {
                for d in [4usize, 5] {
                    let mut scheme = InitScheme::<f64>::balanced(0.5);
                    scheme.det_sign = Some(want);
                    let stack = balanced_init(d, 4, &scheme, &SeededRng::new(seed)).unwrap();
                    let sign = linalg::det_sign_or_phase(&product(&stack));
                    assert_eq!(sign, want.value());
                    let e: f64 = stack
                        .layers()
                        .windows(2)
                        .map(|p| (&p[0] * p[0].transpose() - p[1].transpose() * &p[1]).norm())
                        .sum();
                    let scale: f64 = stack.layers().iter().map(|w| w.norm_squared()).sum();
                    assert!(e < 1e-14 * scale, "{e:e} vs {scale}");
                }
            }
        }
    }

    #[test]
    fn init_scheme_validation() {
        let mut s = InitScheme::<f64>::balanced(0.0);
        assert!(s.validate(4).is_err());
        s.epsilon = 0.1;
        s.s_phases = vec![1.0, 0.5, 1.0, 1.0];
        assert!(s.validate(4).is_err());
        s.s_phases = vec![1.0, -1.0];
        assert!(s.validate(4).is_err());
        let mut c = InitScheme::<Complex64>::balanced(0.1);
        c.det_sign = Some(DetSign::Plus);
        assert!(c.validate(4).is_err());
        assert!(balanced_init(3, 1, &InitScheme::<f64>::balanced(0.1), &SeededRng::new(0)).is_err());
        assert!(random_init(3, 4, &InitScheme::<f64>::balanced(0.1), &SeededRng::new(0)).is_err());
    }

    #[test]
    fn random_init_reproducible_and_scaled() {
        let scheme = InitScheme::<Complex64>::random(0.3);
        let a = random_init(4, 4, &scheme, &SeededRng::new(77)).unwrap();
        let b = random_init(4, 4, &scheme, &SeededRng::new(77)).unwrap();
        assert_eq!(a, b);
        let g = gaussian_matrix::<Complex64>(4, &mut SeededRng::new(77).substream(2));
        assert!((a.layer(2) - g * Complex64::new(0.3, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn main_term_seed_stat_cases() {
        let id = Mat::<f64>::identity(5, 5);
        assert!((main_term_seed_stat(&id).unwrap() - 2.0).abs() < 1e-14);
        let w = linalg::real_diag::<f64>(&[2.0, -3.0]);
        assert!(main_term_seed_stat(&w).unwrap() < 1e-14);
        // a reflection is Haar with det −1
        let rng = SeededRng::new(6);
        let mut found = 0;
        for k in 0..40 {
            let q = haar_unitary::<f64>(5, &mut rng.substream(k));
            if linalg::det_sign_or_phase(&q) < 0.0 {
                assert!(main_term_seed_stat(&q).unwrap() <= 1e-10);
                found += 1;
            }
        }
        assert!(found > 0);
    }

    #[test]
    fn densities() {
        assert!((cue_density(0.3, 5) - 5.0 / (2.0 * PI)).abs() < 1e-15);
        assert!(cre_density_det1(0.0, 5).abs() < 1e-15);
        assert!(cre_density_det1(1e-9, 7).abs() < 1e-12);
        assert!((cre_density_det1(0.0, 6) - 10.0 / (2.0 * PI)).abs() < 1e-14);
        // Chebyshev form agrees with the direct ratio away from kπ.
        for &t in &[0.3, 1.1, -2.0, 3.0] {
            for d in 2..9usize {
                let sign = if d % 2 == 0 { 1.0 } else { -1.0 };
                let direct = ((d - 1) as f64
                    + sign * ((d - 1) as f64 * f64::abs(t)).sin() / f64::abs(t).sin())
                    / (2.0 * PI);
                assert!((cre_density_det1(t, d) - direct).abs() < 1e-12);
            }
        }
    }

    /// Composite Simpson quadrature.
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut acc = f(a) + f(b);
        for k in 1..n {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * f(a + k as f64 * h);
        }
        acc * h / 3.0
    }

    #[test]
    fn cre_density_mass() {
        // Frozen from quadrature: the det=1 density carries d eigenangles for
        // even d and d−1 (the non-fixed ones) for odd d.
        let m6 = simpson(|t| cre_density_det1(t, 6), -PI, PI, 20_000);
        assert!((m6 - 6.0).abs() < 1e-6, "mass {m6}");
        let m5 = simpson(|t| cre_density_det1(t, 5), -PI, PI, 20_000);
        assert!((m5 - 4.0).abs() < 1e-6, "mass {m5}");
    }

    #[test]
    fn eigenangle_cases() {
        let a = eigenangles(&Mat::<f64>::identity(3, 3)).unwrap();
        assert!(a.iter().all(|t| t.abs() < 1e-14));

        let z = Mat::from_diagonal(&nalgebra::DVector::from_vec(vec![
            Complex64::new(0.0, 1.0),
            Complex64::new(0.0, -1.0),
        ]));
        let mut a = eigenangles(&z).unwrap();
        a.sort_by(|x, y| x.total_cmp(y));
        assert!((a[0] + PI / 2.0).abs() < 1e-14 && (a[1] - PI / 2.0).abs() < 1e-14);

        let minus = Mat::<f64>::identity(2, 2) * -1.0;
        let a = eigenangles(&minus).unwrap();
        assert!(a.iter().all(|t| (t - PI).abs() < 1e-12));

        assert!(matches!(
            eigenangles(&(Mat::<f64>::identity(2, 2) * 2.0)),
            Err(Error::NotUnitary { .. })
        ));
    }

    #[test]
    fn eigenangles_are_eigenvalues() {
        let q = haar_unitary::<Complex64>(5, &mut SeededRng::new(12));
        for theta in eigenangles(&q).unwrap() {
            let shifted = &q - Mat::<Complex64>::identity(5, 5) * Complex64::from_polar(1.0, theta);
            let smin = linalg::norms(&shifted).unwrap().sigma_min;
            assert!(smin < 1e-10, "sigma_min {smin}");
        }
    }
}
