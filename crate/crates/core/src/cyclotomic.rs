//! Exact arithmetic in the cyclotomic field Q(zeta_N).
//!
//! Elements are rational-coefficient polynomials in zeta_N reduced modulo the
//! N-th cyclotomic polynomial, so representations are canonical and equality
//! is coefficientwise.  The conductor N is fixed per run, large enough that
//! every root of unity the synthesis produces already lives in the field.

use num::complex::Complex64;
use num::{BigRational, One, Signed, ToPrimitive, Zero};

/// Dense polynomial helpers over Q (little-endian coefficients).
fn poly_trim(p: &mut Vec<BigRational>) {
    while p.last().is_some_and(|c| c.is_zero()) {
        p.pop();
    }
}

fn poly_mul(a: &[BigRational], b: &[BigRational]) -> Vec<BigRational> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![BigRational::zero(); a.len() + b.len() - 1];
    for (i, ai) in a.iter().enumerate() {
        if ai.is_zero() {
            continue;
        }
        for (j, bj) in b.iter().enumerate() {
            if !bj.is_zero() {
                out[i + j] += ai * bj;
            }
        }
    }
    poly_trim(&mut out);
    out
}

/// Division with remainder by a monic-leading divisor.
fn poly_divrem(num: &[BigRational], den: &[BigRational]) -> (Vec<BigRational>, Vec<BigRational>) {
    let mut rem: Vec<BigRational> = num.to_vec();
    poly_trim(&mut rem);
    let dlead = den.last().expect("divisor must be nonzero").clone();
    let dd = den.len() - 1;
    let mut quo = vec![BigRational::zero(); rem.len().saturating_sub(dd)];
    while rem.len() > dd {
        let shift = rem.len() - 1 - dd;
        let c = rem.last().unwrap() / &dlead;
        quo[shift] = c.clone();
        for (k, dk) in den.iter().enumerate() {
            let v = dk * &c;
            rem[shift + k] -= v;
        }
        poly_trim(&mut rem);
        if rem.len() <= dd {
            break;
        }
    }
    poly_trim(&mut quo);
    (quo, rem)
}

/// N-th cyclotomic polynomial: divide x^N - 1 by all proper-divisor factors.
fn cyclotomic_poly(n: u64) -> Vec<BigRational> {
    let mut f = vec![BigRational::zero(); n as usize + 1];
    f[0] = -BigRational::one();
    f[n as usize] = BigRational::one();
    for d in 1..n {
        if n.is_multiple_of(d) {
            let phi_d = cyclotomic_poly(d);
            let (q, r) = poly_divrem(&f, &phi_d);
            debug_assert!(r.is_empty());
            f = q;
        }
    }
    f
}

/// One cyclotomic number; meaningful only relative to a `CycContext`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CycNum {
    /// Coefficients over 1, zeta, ..., zeta^(deg-1); trailing zeros trimmed.
    coeffs: Vec<BigRational>,
}

impl CycNum {
    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn coeffs(&self) -> &[BigRational] {
        &self.coeffs
    }
}

#[derive(Debug)]
pub struct CycContext {
    n: u64,
    modulus: Vec<BigRational>,
    /// zeta^m reduced, for m = 0..N-1.
    powers: Vec<Vec<BigRational>>,
}

impl CycContext {
    pub fn new(n: u64) -> Self {
        assert!(n >= 1, "conductor must be positive");
        let modulus = cyclotomic_poly(n);
        let deg = modulus.len() - 1;
        let mut powers = Vec::with_capacity(n as usize);
        let mut cur = vec![BigRational::one()];
        for _ in 0..n {
            powers.push(cur.clone());
            let mut next = vec![BigRational::zero()];
            next.extend(cur.iter().cloned());
            if next.len() > deg {
                let (_, r) = poly_divrem(&next, &modulus);
                next = r;
            }
            poly_trim(&mut next);
            cur = next;
        }
        CycContext { n, modulus, powers }
    }

    pub fn conductor(&self) -> u64 {
        self.n
    }

    pub fn degree(&self) -> usize {
        self.modulus.len() - 1
    }

    pub fn zero(&self) -> CycNum {
        CycNum { coeffs: Vec::new() }
    }

    pub fn one(&self) -> CycNum {
        self.from_rational(BigRational::one())
    }

    pub fn from_rational(&self, r: BigRational) -> CycNum {
        if r.is_zero() {
            self.zero()
        } else {
            CycNum { coeffs: vec![r] }
        }
    }

    pub fn zeta_pow(&self, m: u64) -> CycNum {
        CycNum {
            coeffs: self.powers[(m % self.n) as usize].clone(),
        }
    }

    pub fn add(&self, a: &CycNum, b: &CycNum) -> CycNum {
        let mut out = vec![BigRational::zero(); a.coeffs.len().max(b.coeffs.len())];
        for (i, c) in a.coeffs.iter().enumerate() {
            out[i] += c;
        }
        for (i, c) in b.coeffs.iter().enumerate() {
            out[i] += c;
        }
        poly_trim(&mut out);
        CycNum { coeffs: out }
    }

    pub fn neg(&self, a: &CycNum) -> CycNum {
        CycNum {
            coeffs: a.coeffs.iter().map(|c| -c).collect(),
        }
    }

    pub fn sub(&self, a: &CycNum, b: &CycNum) -> CycNum {
        self.add(a, &self.neg(b))
    }

    pub fn mul(&self, a: &CycNum, b: &CycNum) -> CycNum {
        let mut prod = poly_mul(&a.coeffs, &b.coeffs);
        if prod.len() > self.degree() {
            let (_, r) = poly_divrem(&prod, &self.modulus);
            prod = r;
        }
        poly_trim(&mut prod);
        CycNum { coeffs: prod }
    }

    pub fn scale(&self, a: &CycNum, r: &BigRational) -> CycNum {
        if r.is_zero() {
            return self.zero();
        }
        CycNum {
            coeffs: a.coeffs.iter().map(|c| c * r).collect(),
        }
    }

    /// Field inverse via the extended Euclidean algorithm against the
    /// (irreducible) modulus.  Panics on zero.
    pub fn inv(&self, a: &CycNum) -> CycNum {
        assert!(!a.is_zero(), "division by zero in cyclotomic field");
        // Maintain r0 = s0*a (mod modulus), r1 = s1*a (mod modulus).
        let mut r0 = self.modulus.clone();
        let mut r1 = a.coeffs.clone();
        let mut s0: Vec<BigRational> = Vec::new();
        let mut s1: Vec<BigRational> = vec![BigRational::one()];
        while !r1.is_empty() {
            let (q, r) = poly_divrem(&r0, &r1);
            let qs1 = poly_mul(&q, &s1);
            let mut s_next = s0.clone();
            if s_next.len() < qs1.len() {
                s_next.resize(qs1.len(), BigRational::zero());
            }
            for (i, c) in qs1.iter().enumerate() {
                s_next[i] -= c;
            }
            poly_trim(&mut s_next);
            r0 = r1;
            r1 = r;
            s0 = s1;
            s1 = s_next;
        }
        // r0 is a nonzero constant gcd (modulus is irreducible over Q).
        assert_eq!(r0.len(), 1, "cyclotomic modulus must be irreducible");
        let c = r0[0].clone();
        let mut out: Vec<BigRational> = s0.iter().map(|x| x / &c).collect();
        if out.len() > self.degree() {
            let (_, r) = poly_divrem(&out, &self.modulus);
            out = r;
        }
        poly_trim(&mut out);
        CycNum { coeffs: out }
    }

    /// Writes `a` as `r * zeta^m` with `r` a positive rational, when it has
    /// that shape.  Recognizes negatives through zeta^(N/2) for even N.
    pub fn as_positive_rational_times_root(&self, a: &CycNum) -> Option<(BigRational, u64)> {
        if a.is_zero() {
            return None;
        }
        // Scale-invariant matching against each power of zeta.
        for m in 0..self.n {
            let p = &self.powers[m as usize];
            if p.len() != a.coeffs.len() {
                continue;
            }
            // Find the ratio from the leading coefficient and check the rest.
            let lead_p = p.last().unwrap();
            let lead_a = a.coeffs.last().unwrap();
            let ratio = lead_a / lead_p;
            if a.coeffs
                .iter()
                .zip(p.iter())
                .all(|(ca, cp)| *ca == cp * &ratio)
            {
                if ratio.is_positive() {
                    return Some((ratio, m));
                }
                if self.n.is_multiple_of(2) {
                    return Some((-ratio, (m + self.n / 2) % self.n));
                }
            }
        }
        None
    }

    pub fn instantiate(&self, a: &CycNum) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        let step = 2.0 * std::f64::consts::PI / self.n as f64;
        for (i, c) in a.coeffs.iter().enumerate() {
            let angle = step * i as f64;
            let z = Complex64::new(angle.cos(), angle.sin());
            acc += z * c.to_f64().expect("rational out of f64 range");
        }
        acc
    }

    /// Renders as a polynomial in `zeta(N)`.
    pub fn display(&self, a: &CycNum) -> String {
        if a.is_zero() {
            return "0".into();
        }
        let mut parts = Vec::new();
        for (i, c) in a.coeffs.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            let base = if i == 0 {
                c.to_string()
            } else {
                let z = if i == 1 {
                    format!("zeta({})", self.n)
                } else {
                    format!("zeta({})^{}", self.n, i)
                };
                if c.is_one() {
                    z
                } else if (-c).is_one() {
                    format!("-{}", z)
                } else {
                    format!("{}*{}", c, z)
                }
            };
            parts.push(base);
        }
        parts.join(" + ")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num::FromPrimitive;

    fn rat(n: i64, d: i64) -> BigRational {
        BigRational::new(
            num::BigInt::from_i64(n).unwrap(),
            num::BigInt::from_i64(d).unwrap(),
        )
    }

    #[test]
    fn cyclotomic_polys() {
        // Phi_1 = x - 1, Phi_2 = x + 1, Phi_6 = x^2 - x + 1, Phi_12 = x^4 - x^2 + 1
        assert_eq!(cyclotomic_poly(1), vec![rat(-1, 1), rat(1, 1)]);
        assert_eq!(cyclotomic_poly(2), vec![rat(1, 1), rat(1, 1)]);
        assert_eq!(cyclotomic_poly(6), vec![rat(1, 1), rat(-1, 1), rat(1, 1)]);
        assert_eq!(
            cyclotomic_poly(12),
            vec![rat(1, 1), rat(0, 1), rat(-1, 1), rat(0, 1), rat(1, 1)]
        );
    }

    #[test]
    fn primitive_cube_roots_sum_to_minus_one() {
        let ctx = CycContext::new(6);
        let omega = ctx.zeta_pow(2); // primitive cube root inside zeta_6
        let omega2 = ctx.mul(&omega, &omega);
        let sum = ctx.add(&omega, &omega2);
        assert_eq!(sum, ctx.from_rational(rat(-1, 1)));
    }

    #[test]
    fn inverse_of_root_is_conjugate_power() {
        let ctx = CycContext::new(12);
        for m in 0..12 {
            let z = ctx.zeta_pow(m);
            let inv = ctx.inv(&z);
            assert_eq!(inv, ctx.zeta_pow((12 - m) % 12));
        }
        // A genuinely non-monomial inverse: 1 + zeta_12.
        let x = ctx.add(&ctx.one(), &ctx.zeta_pow(1));
        let inv = ctx.inv(&x);
        assert_eq!(ctx.mul(&x, &inv), ctx.one());
    }

    #[test]
    fn detects_rational_multiples_of_roots() {
        let ctx = CycContext::new(12);
        let v = ctx.scale(&ctx.zeta_pow(5), &rat(3, 7));
        assert_eq!(
            ctx.as_positive_rational_times_root(&v),
            Some((rat(3, 7), 5))
        );
        let neg = ctx.scale(&ctx.zeta_pow(5), &rat(-3, 7));
        assert_eq!(
            ctx.as_positive_rational_times_root(&neg),
            Some((rat(3, 7), 11))
        );
        let not = ctx.add(&ctx.one(), &ctx.zeta_pow(1));
        assert_eq!(ctx.as_positive_rational_times_root(&not), None);
    }

    #[test]
    fn zeta4_instantiates_to_i() {
        let ctx = CycContext::new(4);
        let z = ctx.instantiate(&ctx.zeta_pow(1));
        assert!((z - Complex64::new(0.0, 1.0)).norm() < 1e-15);
    }

    #[test]
    fn field_laws_spot_checks() {
        let ctx = CycContext::new(6);
        let a = ctx.add(&ctx.zeta_pow(1), &ctx.from_rational(rat(2, 3)));
        let b = ctx.sub(&ctx.zeta_pow(5), &ctx.from_rational(rat(1, 2)));
        let c = ctx.zeta_pow(2);
        let left = ctx.mul(&a, &ctx.add(&b, &c));
        let right = ctx.add(&ctx.mul(&a, &b), &ctx.mul(&a, &c));
        assert_eq!(left, right);
        let ai = ctx.inv(&a);
        assert_eq!(ctx.mul(&a, &ai), ctx.one());
    }
}
