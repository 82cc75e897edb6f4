//! Scalar abstraction over the two fields the simulator supports.
//!
//! Every matrix in the crate is a `DMatrix<T>` with `T: Field`. The real
//! field is represented by a float type (`f32`, `f64`), the complex field by
//! `Complex<f32>` / `Complex<f64>`. Double precision is what the
//! experiments use; single precision compiles and is exercised only lightly.

use std::fmt::{Debug, Display};

use nalgebra::{ComplexField, RealField};
use num_complex::Complex;
use num_traits::{FromPrimitive, ToPrimitive};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Runtime tag for the scalar field of a matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FieldTag {
    Real,
    Complex,
}

impl FieldTag {
    pub fn name(self) -> &'static str {
        match self {
            FieldTag::Real => "real",
            FieldTag::Complex => "complex",
        }
    }
}

impl Display for FieldTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for FieldTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "real" | "r" => Ok(FieldTag::Real),
            "complex" | "c" => Ok(FieldTag::Complex),
            other => Err(format!("unknown field `{other}` (expected real|complex)")),
        }
    }
}

/// Real floating-point type underlying a [`Field`].
pub trait Real:
    RealField + Copy + FromPrimitive + ToPrimitive + Display + Debug + Send + Sync + 'static
{
    /// Lossless-enough conversion of an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).expect("finite real converts to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// A scalar field: ℝ or ℂ over some [`Real`] type.
pub trait Field: ComplexField<RealField: Real> + Copy + Display + Send + Sync + 'static {
    const TAG: FieldTag;

    /// Build a scalar from real and imaginary parts. The imaginary part is
    /// dropped for real fields.
    fn from_parts(re: Self::RealField, im: Self::RealField) -> Self;

    /// Embed into the complex numbers.
    fn to_complex(self) -> Complex<Self::RealField>;

    /// One draw of the standard normal over this field: N(0,1) for ℝ, and
    /// independent N(0,½) real and imaginary parts for ℂ, so `E|z|² = 1`.
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// `z/|z|`, or zero when `|z|` underflows.
    fn unit_phase(self) -> Self {
        let m = self.modulus();
        if m > Self::RealField::lit(1e-300) {
            self.unscale(m)
        } else {
            Self::zero()
        }
    }
}

fn normal_real<T: Real, R: Rng + ?Sized>(rng: &mut R) -> T {
    let x: f64 = StandardNormal.sample(rng);
    T::lit(x)
}

macro_rules! impl_real_field {
    ($($t:ty),*) => {$(
        impl Field for $t {
            const TAG: FieldTag = FieldTag::Real;

            #[inline]
            fn from_parts(re: $t, _im: $t) -> Self {
                re
            }

            #[inline]
            fn to_complex(self) -> Complex<$t> {
                Complex::new(self, 0.0)
            }

            fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
                normal_real(rng)
            }
        }
    )*};
}

impl_real_field!(f32, f64);

impl<T: Real> Field for Complex<T> {
    const TAG: FieldTag = FieldTag::Complex;

    #[inline]
    fn from_parts(re: T, im: T) -> Self {
        Complex::new(re, im)
    }

    #[inline]
    fn to_complex(self) -> Complex<T> {
        self
    }

    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let half = T::lit(std::f64::consts::FRAC_1_SQRT_2);
        let re: T = normal_real(rng);
        let im: T = normal_real(rng);
        Complex::new(re * half, im * half)
    }
}
