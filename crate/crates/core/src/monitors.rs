//! Trajectory monitors.
//!
//! Everything here is a pure function of the current stack (plus the
//! previous [`SvdTrack`] for continuity). [`record`] assembles one
//! [`TrajectoryRecord`] per recorded step and never fails: quantities whose
//! guard trips are reported as absent.

use crate::dynamics::{self, DynConfig, LayerStack, TargetSpec};
use nalgebra::{ComplexField, RealField};
use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::scalar::{Field, FieldTag, Real};

/// Condition-number guard for solves against `W_2`.
pub const COND_GUARD: f64 = 1e12;

/// Marker written to CSV for absent values.
pub const ABSENT: &str = "NA";

/// `(Δ_{1,2}, …, Δ_{N−1,N})` and `e_Δ = (Σ‖Δ‖_F²)^{1/2}`.
pub fn balance_errors<T: Field>(stack: &LayerStack<T>) -> (Vec<Mat<T>>, T::RealField) {
    let deltas = dynamics::balance_deltas(stack);
    let sum = deltas
        .iter()
        .fold(T::RealField::zero(), |acc, d| acc + d.norm_squared());
    (deltas, sum.sqrt())
}

/// Skew error and main term of a four-layer stack, both built on
/// `W_1' = W_2⁻¹W_3ᴴW_4ᴴ` (computed by a linear solve).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UnbalancedTerms<R> {
    /// `‖W_1 − W_1'‖_F`.
    pub skew: R,
    /// `σ_min(W_1 + W_1')`.
    pub main_sigma_min: R,
}

fn rotated_first_layer<T: Field>(stack: &LayerStack<T>) -> Result<Mat<T>> {
    if stack.n_layers() != 4 {
        return Err(Error::InvalidArgument(format!(
            "skew/main monitors need exactly 4 layers, got {}",
            stack.n_layers()
        )));
    }
    let w2 = stack.layer(2);
    let cond = linalg::condition_number(w2)?;
    if !(cond < COND_GUARD) {
        return Err(Error::IllConditioned { cond });
    }
    let rhs = stack.layer(3).adjoint() * stack.layer(4).adjoint();
    linalg::solve(w2, &rhs)
}

pub fn unbalanced_terms<T: Field>(stack: &LayerStack<T>) -> Result<UnbalancedTerms<T::RealField>> {
    let w1p = rotated_first_layer(stack)?;
    let w1 = stack.layer(1);
    Ok(UnbalancedTerms {
        skew: (w1 - &w1p).norm(),
        main_sigma_min: linalg::norms(&(w1 + &w1p))?.sigma_min,
    })
}

/// `‖W_1 − W_2⁻¹W_3ᴴW_4ᴴ‖_F`.
pub fn skew_error<T: Field>(stack: &LayerStack<T>) -> Result<T::RealField> {
    Ok(unbalanced_terms(stack)?.skew)
}

/// `σ_min(W_1 + W_2⁻¹W_3ᴴW_4ᴴ)`.
pub fn main_term_sigma_min<T: Field>(stack: &LayerStack<T>) -> Result<T::RealField> {
    Ok(unbalanced_terms(stack)?.main_sigma_min)
}

/// `W = U·Σ_w^N·Vᴴ`, optionally aligned column-by-column to a previous track.
#[derive(Clone, Debug, PartialEq)]
pub struct SvdTrack<T: Field> {
    pub u: Mat<T>,
    /// `σ_{w,k} = σ_k(W)^{1/N}`, in tracked column order.
    pub sigma_w: Vec<T::RealField>,
    pub v: Mat<T>,
    pub aligned: bool,
}

impl<T: Field> SvdTrack<T> {
    pub fn dim(&self) -> usize {
        self.sigma_w.len()
    }

    /// `U·diag(σ_w)^N·Vᴴ`.
    pub fn recompose(&self, n_layers: usize) -> Mat<T> {
        let mut us = self.u.clone();
        for (k, &s) in self.sigma_w.iter().enumerate() {
            us.column_mut(k).scale_mut(s.powi(n_layers as i32));
        }
        us * self.v.adjoint()
    }

    fn sigma_w_matrix(&self) -> Mat<T> {
        linalg::real_diag::<T>(&self.sigma_w)
    }
}

/// Greedy maximal-overlap matching of new left singular vectors to the
/// previous ones; pairs are taken in order of decreasing `|u_prevᴴ u|`,
/// ties by index. Returns `perm` with new column `perm[i]` going to slot `i`.
fn match_columns<T: Field>(prev: &Mat<T>, new: &Mat<T>) -> Vec<usize> {
    let d = prev.ncols();
    let overlap = prev.adjoint() * new;
    let mut pairs: Vec<(f64, usize, usize)> = (0..d)
        .flat_map(|i| (0..d).map(move |k| (i, k)))
        .map(|(i, k)| (overlap[(i, k)].modulus().as_f64(), i, k))
        .collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut perm = vec![usize::MAX; d];
    let mut taken = vec![false; d];
    for (_, i, k) in pairs {
        if perm[i] == usize::MAX && !taken[k] {
            perm[i] = k;
            taken[k] = true;
        }
    }
    perm
}

/// Fresh SVD of `w` with `σ_w = s^{1/N}`. With `prev`, columns are
/// permuted for continuity and each pair `(u_k, v_k)` is multiplied by one
/// unit scalar so that `Re(u_prev,kᴴ u_k) > 0`, which leaves
/// `W = UΣ_w^N Vᴴ` unchanged.
pub fn track_svd<T: Field>(
    w: &Mat<T>,
    n_layers: usize,
    prev: Option<&SvdTrack<T>>,
) -> Result<SvdTrack<T>> {
    if n_layers == 0 {
        return Err(Error::InvalidArgument("n_layers must be positive".into()));
    }
    let dec = linalg::svd(w)?;
    let inv_n = T::RealField::one() / T::RealField::lit(n_layers as f64);
    let sigma_w: Vec<T::RealField> = dec.s.iter().map(|&s| s.powf(inv_n)).collect();
    let Some(prev) = prev.filter(|p| p.dim() == sigma_w.len()) else {
        return Ok(SvdTrack {
            u: dec.u,
            sigma_w,
            v: dec.v,
            aligned: false,
        });
    };

    let perm = match_columns(&prev.u, &dec.u);
    let d = perm.len();
    let mut u = Mat::<T>::from_fn(d, d, |r, i| dec.u[(r, perm[i])]);
    let mut v = Mat::<T>::from_fn(d, d, |r, i| dec.v[(r, perm[i])]);
    let sigma_w: Vec<T::RealField> = perm.iter().map(|&k| sigma_w[k]).collect();
    for i in 0..d {
        let c = prev.u.column(i).dotc(&u.column(i));
        let phase = c.unit_phase();
        if phase.is_zero() {
            continue;
        }
        let fix = phase.conjugate();
        for z in u.column_mut(i).iter_mut() {
            *z *= fix;
        }
        for z in v.column_mut(i).iter_mut() {
            *z *= fix;
        }
    }
    Ok(SvdTrack {
        u,
        sigma_w,
        v,
        aligned: true,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct UvTerms<R> {
    /// `x_k = ½σ_k((U+V)Σ_w)`, descending.
    pub half_sum_sv: Vec<R>,
    /// `‖Σ^{1/2}(U−V)Σ_w‖_F²`.
    pub skew_uv: R,
    /// `‖(U−V)Σ_w‖_op`, the correction in the singular-value sandwich.
    pub diff_op: R,
}

pub fn uv_terms<T: Field>(
    track: &SvdTrack<T>,
    target: &TargetSpec<T>,
) -> Result<UvTerms<T::RealField>> {
    if !target.reduced {
        return Err(Error::NotReduced);
    }
    if target.dim() != track.dim() {
        return Err(Error::DimMismatch("track and target differ in dimension".into()));
    }
    let sw = track.sigma_w_matrix();
    let half = T::from_real(T::RealField::lit(0.5));
    let half_sum_sv = linalg::singular_values(&((&track.u + &track.v) * &sw * half))?;
    let diff = (&track.u - &track.v) * &sw;
    let root: Vec<T::RealField> = target
        .diag_values()
        .iter()
        .map(|&s| s.max(T::RealField::zero()).sqrt())
        .collect();
    let skew_uv = (linalg::real_diag::<T>(&root) * &diff).norm_squared();
    Ok(UvTerms {
        half_sum_sv,
        skew_uv,
        diff_op: linalg::op_norm(&diff)?,
    })
}

/// Checks `x_k ≤ σ_{w,k}` and the upper bounds
/// `σ_{w,k} ≤ (√2/2)·√((2x_k)² + ‖(U−V)Σ_w‖²_op)` for `k < d`,
/// `σ_{w,d} ≤ ½·√((2x_d)² + ‖(U−V)Σ_w‖²_op)`, with both sequences sorted
/// descending. Returns the largest violation (≤ 0 when all hold).
pub fn sigma_sandwich_violation(sigma_w: &[f64], terms: &UvTerms<f64>) -> f64 {
    let mut sw = sigma_w.to_vec();
    sw.sort_by(|a, b| b.total_cmp(a));
    let d = sw.len();
    let mut worst = f64::NEG_INFINITY;
    for k in 0..d {
        let x = terms.half_sum_sv[k];
        let radicand = (2.0 * x).powi(2) + terms.diff_op.powi(2);
        let factor = if k + 1 < d { std::f64::consts::FRAC_1_SQRT_2 } else { 0.5 };
        let upper = factor * radicand.sqrt();
        worst = worst.max(x - sw[k]).max(sw[k] - upper);
    }
    worst
}

/// Checks `λ_k(P) ≤ λ_k(S) ≤ c_k·(λ_k(P) + ‖((U−V)/2)S((U−V)/2)ᴴ‖_op)` for
/// `S = diag(s)`, `P = ((U+V)/2)S((U+V)/2)ᴴ`, with `c_k = 2` for `k < d` and
/// `c_d = 1`.
pub fn eig_sandwich_check<T: Field>(u: &Mat<T>, v: &Mat<T>, s: &[T::RealField]) -> Result<bool> {
    let d = s.len();
    if u.shape() != (d, d) || v.shape() != (d, d) {
        return Err(Error::DimMismatch("u, v and s must agree in dimension".into()));
    }
    for m in [u, v] {
        let residual = linalg::unitarity_residual(m).as_f64();
        if residual > 1e-8 {
            return Err(Error::NotUnitary { residual });
        }
    }
    if s.iter().any(|&x| x < T::RealField::zero()) {
        return Err(Error::InvalidArgument("s must be non-negative".into()));
    }
    let half = T::from_real(T::RealField::lit(0.5));
    let sm = linalg::real_diag::<T>(s);
    let plus = (u + v) * half;
    let minus = (u - v) * half;
    let p = &plus * &sm * plus.adjoint();
    let e = &minus * &sm * minus.adjoint();
    let (lp, _) = linalg::hermitian_eig(&p)?;
    let (le, _) = linalg::hermitian_eig(&e)?;
    let e_op = le.iter().fold(0.0f64, |acc, &l| acc.max(l.as_f64().abs()));
    let mut ls: Vec<f64> = s.iter().map(|x| x.as_f64()).collect();
    ls.sort_by(|a, b| b.total_cmp(a));
    let tol = 1e-10 * (1.0 + ls.first().copied().unwrap_or(0.0));
    Ok((0..d).all(|k| {
        let lpk = lp[k].as_f64();
        let factor = if k + 1 < d { 2.0 } else { 1.0 };
        lpk <= ls[k] + tol && ls[k] <= factor * (lpk + e_op) + tol
    }))
}

/// `(max_{j,k} σ_k(W_j), min_{j,k} σ_k(W_j))`.
pub fn layer_extremes<T: Field>(stack: &LayerStack<T>) -> Result<(T::RealField, T::RealField)> {
    let mut hi = T::RealField::zero();
    let mut lo: Option<T::RealField> = None;
    for w in stack.layers() {
        let n = linalg::norms(w)?;
        hi = hi.max(n.op);
        lo = Some(lo.map_or(n.sigma_min, |l| l.min(n.sigma_min)));
    }
    Ok((hi, lo.unwrap_or(hi)))
}

/// Sign (ℝ) or phase (ℂ) of `det W`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DetIndicator {
    Sign(f64),
    Phase { re: f64, im: f64 },
}

impl DetIndicator {
    fn of<T: Field>(w: &Mat<T>) -> Self {
        let z = linalg::det_sign_or_phase(w).to_complex();
        match T::TAG {
            FieldTag::Real => DetIndicator::Sign(z.re.as_f64()),
            FieldTag::Complex => DetIndicator::Phase {
                re: z.re.as_f64(),
                im: z.im.as_f64(),
            },
        }
    }

    /// CSV encoding: the sign over ℝ, the phase angle in radians over ℂ
    /// (`NA` when the determinant underflows).
    pub fn csv_value(&self) -> Option<f64> {
        match *self {
            DetIndicator::Sign(s) => Some(s),
            DetIndicator::Phase { re, im } => {
                if re == 0.0 && im == 0.0 {
                    None
                } else {
                    Some(im.atan2(re))
                }
            }
        }
    }
}

/// All monitored quantities at one step.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRecord {
    pub step: u64,
    pub time: f64,
    pub dim: usize,
    pub l_ori: f64,
    pub l_reg: f64,
    pub e_delta: f64,
    pub sig_max: Option<f64>,
    pub sig_min: Option<f64>,
    pub skew_err: Option<f64>,
    pub main_sv_min: Option<f64>,
    pub det_ind: DetIndicator,
    /// Empty when the SVD of the product failed.
    pub sigma_w: Vec<f64>,
    pub half_sum_sv: Option<Vec<f64>>,
    pub skew_uv: Option<f64>,
    /// `‖(U−V)Σ_w‖_op`; not written to CSV.
    pub diff_op: Option<f64>,
}

fn fmt_f64(x: f64) -> String {
    format!("{x:e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| ABSENT.to_string(), fmt_f64)
}

impl TrajectoryRecord {
    /// Column names, in order: `step, time, l_ori, l_reg, e_delta, sig_max,
    /// sig_min, skew_err, main_sv_min, det_ind, sigma_w_0..sigma_w_{d-1},
    /// half_sum_sv_0..half_sum_sv_{d-1}, skew_uv`.
    pub fn csv_header(d: usize) -> Vec<String> {
        let mut cols: Vec<String> = [
            "step",
            "time",
            "l_ori",
            "l_reg",
            "e_delta",
            "sig_max",
            "sig_min",
            "skew_err",
            "main_sv_min",
            "det_ind",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        cols.extend((0..d).map(|k| format!("sigma_w_{k}")));
        cols.extend((0..d).map(|k| format!("half_sum_sv_{k}")));
        cols.push("skew_uv".into());
        cols
    }

    pub fn csv_fields(&self) -> Vec<String> {
        let mut out = vec![
            self.step.to_string(),
            fmt_f64(self.time),
            fmt_f64(self.l_ori),
            fmt_f64(self.l_reg),
            fmt_f64(self.e_delta),
            fmt_opt(self.sig_max),
            fmt_opt(self.sig_min),
            fmt_opt(self.skew_err),
            fmt_opt(self.main_sv_min),
            fmt_opt(self.det_ind.csv_value()),
        ];
        for k in 0..self.dim {
            out.push(fmt_opt(self.sigma_w.get(k).copied()));
        }
        for k in 0..self.dim {
            out.push(fmt_opt(self.half_sum_sv.as_ref().and_then(|v| v.get(k).copied())));
        }
        out.push(fmt_opt(self.skew_uv));
        out
    }

    /// Finite smallest `x_k`, if present.
    pub fn min_half_sum_sv(&self) -> Option<f64> {
        self.half_sum_sv.as_ref().and_then(|v| v.last().copied())
    }
}

fn downgrade<V>(what: &str, step: u64, r: Result<V>) -> Option<V> {
    match r {
        Ok(v) => Some(v),
        Err(e) => {
            log::warn!("step {step}: {what} unavailable: {e}");
            None
        }
    }
}

/// Assembles every monitor at the current state. Returns the new track to
/// pass to the next call.
pub fn record<T: Field>(
    step: u64,
    time: f64,
    stack: &LayerStack<T>,
    target: &TargetSpec<T>,
    cfg: &DynConfig<T::RealField>,
    prev: Option<&SvdTrack<T>>,
) -> (TrajectoryRecord, Option<SvdTrack<T>>) {
    let d = stack.dim();
    let n = stack.n_layers();
    let (l_ori, l_reg) = match dynamics::loss(stack, target, cfg) {
        Ok(l) => (l.l_ori.as_f64(), l.l_reg.as_f64()),
        Err(e) => {
            log::warn!("step {step}: loss unavailable: {e}");
            (f64::NAN, f64::NAN)
        }
    };
    let (_, e_delta) = balance_errors(stack);
    let extremes = downgrade("layer extremes", step, layer_extremes(stack));
    let unbalanced = if n == 4 {
        match unbalanced_terms(stack) {
            Ok(t) => Some(t),
            Err(Error::IllConditioned { cond }) => {
                log::debug!("step {step}: W_2 ill-conditioned (cond {cond:e})");
                None
            }
            Err(e) => downgrade::<UnbalancedTerms<T::RealField>>("skew/main terms", step, Err(e)),
        }
    } else {
        None
    };
    let w = dynamics::product(stack);
    let track = downgrade("product SVD", step, track_svd(&w, n, prev));
    let uv = track.as_ref().and_then(|t| {
        if target.reduced {
            downgrade("U/V terms", step, uv_terms(t, target))
        } else {
            None
        }
    });
    let rec = TrajectoryRecord {
        step,
        time,
        dim: d,
        l_ori,
        l_reg,
        e_delta: e_delta.as_f64(),
        sig_max: extremes.map(|e| e.0.as_f64()),
        sig_min: extremes.map(|e| e.1.as_f64()),
        skew_err: unbalanced.map(|t| t.skew.as_f64()),
        main_sv_min: unbalanced.map(|t| t.main_sigma_min.as_f64()),
        det_ind: DetIndicator::of(&w),
        sigma_w: track
            .as_ref()
            .map(|t| t.sigma_w.iter().map(|s| s.as_f64()).collect())
            .unwrap_or_default(),
        half_sum_sv: uv
            .as_ref()
            .map(|u| u.half_sum_sv.iter().map(|x| x.as_f64()).collect()),
        skew_uv: uv.as_ref().map(|u| u.skew_uv.as_f64()),
        diff_op: uv.as_ref().map(|u| u.diff_op.as_f64()),
    };
    (rec, track)
}
