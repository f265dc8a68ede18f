//! Truncated multivariate dual numbers.
//!
//! A [`Multidual`] carries one coefficient per subset of up to three nilpotent
//! units `ε₁, ε₂, ε₃` with `εᵢ² = 0`. The coefficient of `ε₁ε₂…εₙ` of a product
//! of such numbers is the mixed first derivative `∂₁∂₂…∂ₙ` of the product.

use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;

type C = Complex64;

pub const MAX_UNITS: usize = 3;
const COEFFS: usize = 1 << MAX_UNITS;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Multidual {
    c: [C; COEFFS],
}

impl Multidual {
    pub fn constant(v: C) -> Self {
        let mut c = [C::new(0.0, 0.0); COEFFS];
        c[0] = v;
        Multidual { c }
    }

    pub fn real(v: f64) -> Self {
        Self::constant(C::new(v, 0.0))
    }

    /// `value + slope · εᵢ`.
    pub fn linear(value: C, unit: usize, slope: C) -> Self {
        assert!(unit < MAX_UNITS, "unit index {unit} out of range");
        let mut d = Self::constant(value);
        d.c[1 << unit] = slope;
        d
    }

    /// Lifts a smooth `f` through an argument `x₀ + a·εᵢ` carrying a single unit,
    /// where only `f(x₀)` and `f′(x₀)` are needed.
    pub fn lift_single(value: C, derivative: C, unit: usize, arg_slope: f64) -> Self {
        Self::linear(value, unit, derivative * arg_slope)
    }

    pub fn value(&self) -> C {
        self.c[0]
    }

    /// Coefficient of the monomial `∏_{i ∈ mask} εᵢ`.
    pub fn coeff(&self, mask: usize) -> C {
        self.c[mask]
    }

    /// Coefficient of `ε₁…εₙ`, i.e. the mixed derivative in the first `n` units.
    pub fn mixed_derivative(&self, n: usize) -> C {
        assert!(n <= MAX_UNITS);
        self.c[(1 << n) - 1]
    }

    pub fn scale(mut self, s: C) -> Self {
        for x in &mut self.c {
            *x *= s;
        }
        self
    }
}

impl Add for Multidual {
    type Output = Self;
    fn add(mut self, rhs: Self) -> Self {
        for (a, b) in self.c.iter_mut().zip(rhs.c) {
            *a += b;
        }
        self
    }
}

impl Sub for Multidual {
    type Output = Self;
    fn sub(mut self, rhs: Self) -> Self {
        for (a, b) in self.c.iter_mut().zip(rhs.c) {
            *a -= b;
        }
        self
    }
}

impl Neg for Multidual {
    type Output = Self;
    fn neg(self) -> Self {
        self.scale(C::new(-1.0, 0.0))
    }
}

impl Mul for Multidual {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let mut c = [C::new(0.0, 0.0); COEFFS];
        for a in 0..COEFFS {
            if self.c[a] == C::new(0.0, 0.0) {
                continue;
            }
            for b in 0..COEFFS {
                if a & b == 0 {
                    c[a | b] += self.c[a] * rhs.c[b];
                }
            }
        }
        Multidual { c }
    }
}

impl Mul<f64> for Multidual {
    type Output = Self;
    fn mul(self, rhs: f64) -> Self {
        self.scale(C::new(rhs, 0.0))
    }
}
