//! Loss, exact gradients, and the two steppers (gradient descent and
//! classical RK4 on the gradient flow) for deep square matrix factorization
//! `W = W_N ⋯ W_1 ≈ Σ`.
//!
//! Complex gradients follow the convention `∇_M = ∂/∂Re M + i ∂/∂Im M`,
//! twice the conjugate Wirtinger derivative, so that the update rule
//! `W ← W − η∇L` reads the same over ℝ and ℂ.

use nalgebra::{ComplexField, RealField};
use num_traits::Zero;

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::scalar::{Field, Real};

/// The optimized state: layers `(W_1, …, W_N)`, all `d×d`.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerStack<T: Field> {
    layers: Vec<Mat<T>>,
}

impl<T: Field> LayerStack<T> {
    pub fn new(layers: Vec<Mat<T>>) -> Result<Self> {
        if layers.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "a layer stack needs at least 2 layers, got {}",
                layers.len()
            )));
        }
        let d = layers[0].nrows();
        if d == 0 {
            return Err(Error::InvalidArgument("layer dimension must be positive".into()));
        }
        for (j, w) in layers.iter().enumerate() {
            if w.nrows() != d || w.ncols() != d {
                return Err(Error::DimMismatch(format!(
                    "layer {} is {}x{}, expected {d}x{d}",
                    j + 1,
                    w.nrows(),
                    w.ncols()
                )));
            }
            if !linalg::is_finite(w) {
                return Err(Error::NonFinite);
            }
        }
        Ok(Self { layers })
    }

    pub fn zeros(d: usize, n_layers: usize) -> Result<Self> {
        Self::new(vec![Mat::zeros(d, d); n_layers])
    }

    pub fn identity(d: usize, n_layers: usize) -> Result<Self> {
        Self::new(vec![Mat::identity(d, d); n_layers])
    }

    /// `layers()[0]` is `W_1`.
    pub fn layers(&self) -> &[Mat<T>] {
        &self.layers
    }

    pub fn layer(&self, j: usize) -> &Mat<T> {
        &self.layers[j - 1]
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn dim(&self) -> usize {
        self.layers[0].nrows()
    }

    pub fn into_layers(self) -> Vec<Mat<T>> {
        self.layers
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(linalg::is_finite)
    }

    /// Largest Frobenius norm over the layers.
    pub fn max_layer_norm(&self) -> T::RealField {
        self.layers
            .iter()
            .fold(T::RealField::zero(), |acc, w| acc.max(w.norm()))
    }

    // `self + h·dir`, unchecked: used inside the integrators.
    fn offset(&self, dir: &[Mat<T>], h: T::RealField) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .zip(dir)
                .map(|(w, g)| w + g * T::from_real(h))
                .collect(),
        }
    }

    fn ensure_compatible(&self, target: &TargetSpec<T>) -> Result<()> {
        let d = self.dim();
        if target.matrix.nrows() != d || target.matrix.ncols() != d {
            return Err(Error::DimMismatch(format!(
                "target is {}x{}, layers are {d}x{d}",
                target.matrix.nrows(),
                target.matrix.ncols()
            )));
        }
        Ok(())
    }
}

/// The target `Σ`. `reduced` is true iff `Σ` is diagonal with real
/// non-negative entries.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetSpec<T: Field> {
    pub matrix: Mat<T>,
    pub reduced: bool,
}

impl<T: Field> TargetSpec<T> {
    pub fn new(matrix: Mat<T>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::DimMismatch("target must be square".into()));
        }
        if !linalg::is_finite(&matrix) {
            return Err(Error::NonFinite);
        }
        let reduced = is_reduced(&matrix);
        Ok(Self { matrix, reduced })
    }

    pub fn scaled_identity(d: usize, sigma: T::RealField) -> Self {
        Self::diagonal(&vec![sigma; d])
    }

    /// Diagonal target; reduced when all entries are non-negative.
    pub fn diagonal(diag: &[T::RealField]) -> Self {
        let matrix = linalg::real_diag::<T>(diag);
        let reduced = is_reduced(&matrix);
        Self { matrix, reduced }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Diagonal entries as reals; only meaningful for reduced targets.
    pub fn diag_values(&self) -> Vec<T::RealField> {
        (0..self.dim()).map(|i| self.matrix[(i, i)].real()).collect()
    }

    /// `σ_1(Σ)`.
    pub fn sigma_max(&self) -> Result<T::RealField> {
        linalg::op_norm(&self.matrix)
    }
}

fn is_reduced<T: Field>(m: &Mat<T>) -> bool {
    let tol = T::RealField::lit(1e-14);
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let z = m[(i, j)];
            if i == j {
                if z.imaginary().abs() > tol || z.real() < T::RealField::zero() {
                    return false;
                }
            } else if z.modulus() >= tol {
                return false;
            }
        }
    }
    true
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Integrator {
    /// `W_j ← W_j − η∇_{W_j}L`.
    Gd,
    /// One classical Runge–Kutta step of `dW_j/dt = −∇_{W_j}L`.
    FlowRk4,
}

impl std::str::FromStr for Integrator {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gd" => Ok(Integrator::Gd),
            "rk4" | "flow" | "flow-rk4" | "flowrk4" => Ok(Integrator::FlowRk4),
            other => Err(format!("unknown integrator `{other}` (expected gd|rk4)")),
        }
    }
}

impl std::fmt::Display for Integrator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Integrator::Gd => "gd",
            Integrator::FlowRk4 => "rk4",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DynConfig<R> {
    /// Regularization weight `a ≥ 0`.
    pub reg_a: R,
    /// Learning rate `η` for GD, step `h` for the flow integrator.
    pub step: R,
    pub integrator: Integrator,
    /// Drop `L_ori` from the objective (regularizer-only dynamics).
    pub omit_l_ori: bool,
}

impl<R: Real> DynConfig<R> {
    pub fn gd(reg_a: R, eta: R) -> Self {
        Self {
            reg_a,
            step: eta,
            integrator: Integrator::Gd,
            omit_l_ori: false,
        }
    }

    pub fn flow(reg_a: R, h: R) -> Self {
        Self {
            reg_a,
            step: h,
            integrator: Integrator::FlowRk4,
            omit_l_ori: false,
        }
    }

    /// Default flow step `min(1e-3, 0.1/(1+a))`.
    pub fn default_flow_step(reg_a: R) -> R {
        R::lit(1e-3).min(R::lit(0.1) / (R::one() + reg_a))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.reg_a >= R::zero()) {
            return Err(Error::InvalidArgument("reg_a must be >= 0".into()));
        }
        if !(self.step > R::zero()) {
            return Err(Error::InvalidArgument("step size must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossParts<R> {
    pub l_ori: R,
    pub l_reg: R,
    /// The optimized objective: `l_ori + l_reg`, or `l_reg` alone when
    /// `omit_l_ori` is set.
    pub total: R,
}

/// `W_N ⋯ W_1`.
pub fn product<T: Field>(stack: &LayerStack<T>) -> Mat<T> {
    let mut it = stack.layers.iter();
    let first = it.next().expect("stack has layers").clone();
    it.fold(first, |acc, w| w * acc)
}

/// `Δ_{j,j+1} = W_jW_jᴴ − W_{j+1}ᴴW_{j+1}` for `j = 1..N−1`.
pub fn balance_deltas<T: Field>(stack: &LayerStack<T>) -> Vec<Mat<T>> {
    stack
        .layers
        .windows(2)
        .map(|pair| &pair[0] * pair[0].adjoint() - pair[1].adjoint() * &pair[1])
        .collect()
}

pub fn loss<T: Field>(
    stack: &LayerStack<T>,
    target: &TargetSpec<T>,
    cfg: &DynConfig<T::RealField>,
) -> Result<LossParts<T::RealField>> {
    stack.ensure_compatible(target)?;
    let half = T::RealField::lit(0.5);
    let l_ori = (&target.matrix - product(stack)).norm_squared() * half;
    let reg_sum = balance_deltas(stack)
        .iter()
        .fold(T::RealField::zero(), |acc, delta| acc + delta.norm_squared());
    let l_reg = cfg.reg_a * reg_sum * T::RealField::lit(0.25);
    let total = if cfg.omit_l_ori { l_reg } else { l_ori + l_reg };
    Ok(LossParts { l_ori, l_reg, total })
}

/// Partial products: `right[k] = W_k ⋯ W_1` (`right[0] = I`) and
/// `left[k] = W_N ⋯ W_k` (`left[N+1] = I`), indexed from 0..=N+1.
struct PartialProducts<T: Field> {
    left: Vec<Mat<T>>,
    right: Vec<Mat<T>>,
}

impl<T: Field> PartialProducts<T> {
    fn new(stack: &LayerStack<T>) -> Self {
        let n = stack.n_layers();
        let d = stack.dim();
        let id = Mat::<T>::identity(d, d);
        let mut right = Vec::with_capacity(n + 1);
        right.push(id.clone());
        for j in 1..=n {
            let next = stack.layer(j) * &right[j - 1];
            right.push(next);
        }
        // left[0] unused; filled with identity to keep indices aligned.
        let mut left = vec![id.clone(); n + 2];
        for j in (1..=n).rev() {
            left[j] = &left[j + 1] * stack.layer(j);
        }
        Self { left, right }
    }
}

/// `∇_{W_j}L` for every layer.
pub fn gradient<T: Field>(
    stack: &LayerStack<T>,
    target: &TargetSpec<T>,
    cfg: &DynConfig<T::RealField>,
) -> Result<Vec<Mat<T>>> {
    stack.ensure_compatible(target)?;
    Ok(gradient_unchecked(stack, target, cfg))
}

fn gradient_unchecked<T: Field>(
    stack: &LayerStack<T>,
    target: &TargetSpec<T>,
    cfg: &DynConfig<T::RealField>,
) -> Vec<Mat<T>> {
    let n = stack.n_layers();
    let d = stack.dim();
    let mut grads = vec![Mat::<T>::zeros(d, d); n];

    if !cfg.omit_l_ori {
        let pp = PartialProducts::new(stack);
        let residual = &target.matrix - &pp.right[n];
        for j in 1..=n {
            grads[j - 1] = -(pp.left[j + 1].adjoint() * &residual * pp.right[j - 1].adjoint());
        }
    }

    if cfg.reg_a > T::RealField::zero() {
        let a = T::from_real(cfg.reg_a);
        let deltas = balance_deltas(stack);
        for j in 1..=n {
            let w = stack.layer(j);
            let g = &mut grads[j - 1];
            if j >= 2 {
                *g -= w * &deltas[j - 2] * a;
            }
            if j <= n - 1 {
                *g += &deltas[j - 1] * w * a;
            }
        }
    }
    grads
}

fn checked_result<T: Field>(stack: LayerStack<T>) -> Result<LayerStack<T>> {
    if stack.is_finite() {
        Ok(stack)
    } else {
        Err(Error::NonFinite)
    }
}

/// Simultaneous update of all layers from gradients at the current stack.
pub fn gd_step<T: Field>(
    stack: &LayerStack<T>,
    target: &TargetSpec<T>,
    cfg: &DynConfig<T::RealField>,
) -> Result<LayerStack<T>> {
    let grads = gradient(stack, target, cfg)?;
    checked_result(stack.offset(&grads, -cfg.step))
}

pub fn flow_step_rk4<T: Field>(
    stack: &LayerStack<T>,
    target: &TargetSpec<T>,
    cfg: &DynConfig<T::RealField>,
) -> Result<LayerStack<T>> {
    stack.ensure_compatible(target)?;
    let h = cfg.step;
    let half = T::RealField::lit(0.5);
    // k_i hold the gradients; the velocity is their negation.
    let k1 = gradient_unchecked(stack, target, cfg);
    let k2 = gradient_unchecked(&stack.offset(&k1, -h * half), target, cfg);
    let k3 = gradient_unchecked(&stack.offset(&k2, -h * half), target, cfg);
    let k4 = gradient_unchecked(&stack.offset(&k3, -h), target, cfg);
    let two = T::from_real(T::RealField::lit(2.0));
    let combined: Vec<Mat<T>> = k1
        .iter()
        .zip(&k2)
        .zip(&k3)
        .zip(&k4)
        .map(|(((a, b), c), e)| a + b * two + c * two + e)
        .collect();
    checked_result(stack.offset(&combined, -h / T::RealField::lit(6.0)))
}

/// One step with the configured integrator.
pub fn step<T: Field>(
    stack: &LayerStack<T>,
    target: &TargetSpec<T>,
    cfg: &DynConfig<T::RealField>,
) -> Result<LayerStack<T>> {
    match cfg.integrator {
        Integrator::Gd => gd_step(stack, target, cfg),
        Integrator::FlowRk4 => flow_step_rk4(stack, target, cfg),
    }
}

/// Rotates a general target to `Σ' = diag(σ(Σ))` (descending) via
/// `Σ = U_Σ Σ' V_Σᴴ`, `W_1 ← W_1 V_Σ`, `W_N ← U_Σᴴ W_N`. Loss and balance
/// errors are unchanged by the transformation.
pub fn reduce_target<T: Field>(
    sigma: &Mat<T>,
    stack: &LayerStack<T>,
) -> Result<(TargetSpec<T>, LayerStack<T>)> {
    let d = stack.dim();
    if sigma.nrows() != d || sigma.ncols() != d {
        return Err(Error::DimMismatch(format!(
            "target is {}x{}, layers are {d}x{d}",
            sigma.nrows(),
            sigma.ncols()
        )));
    }
    let dec = linalg::svd(sigma)?;
    let n = stack.n_layers();
    let mut layers = stack.layers.clone();
    layers[0] = &layers[0] * &dec.v;
    layers[n - 1] = dec.u.adjoint() * &layers[n - 1];
    Ok((TargetSpec::diagonal(&dec.s), LayerStack::new(layers)?))
}
