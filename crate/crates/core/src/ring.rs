//! Exact arithmetic in `K = Q(sqrt k)` and its ring of integers `R = Z[w]`,
//! where `w = (1 + sqrt k) / k0` and `k0 = 2` iff `k = 1 (mod 4)`, else `1`.
//!
//! Ring elements are stored on the integral basis `(1, w)`; field elements on
//! the basis `(1, sqrt k)` with rational coordinates. Every predicate here is
//! decided exactly: signs of field elements, coprimality of pairs via a
//! Hermite normal form, fundamental units via the continued fraction of `w`
//! with the Pell search as an independent cross-check in the tests.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::{Error, Result};

pub type Int = BigInt;
pub type Rat = BigRational;

fn int(v: i64) -> Int {
    Int::from(v)
}

fn rat_int(v: i64) -> Rat {
    Rat::from_integer(int(v))
}

/// Tag identifying the ambient field of an element. Elements with zero
/// irrational part carry the `RATIONAL` sentinel and combine with any field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FieldTag {
    pub k: i64,
    pub k0: i64,
}

impl FieldTag {
    pub const RATIONAL: FieldTag = FieldTag { k: 0, k0: 1 };

    pub fn is_rational(&self) -> bool {
        self.k == 0
    }

    fn merge(self, other: FieldTag) -> FieldTag {
        if self.is_rational() {
            other
        } else if other.is_rational() || self == other {
            self
        } else {
            panic!("mixed fields: sqrt {} vs sqrt {}", self.k, other.k);
        }
    }

    /// Trace of `w`: `w + w' = 2/k0`.
    fn omega_trace(&self) -> i64 {
        2 / self.k0
    }

    /// Product `w * w' = (1 - k) / k0^2`.
    fn omega_norm(&self) -> i64 {
        (1 - self.k) / (self.k0 * self.k0)
    }
}

// ---------------------------------------------------------------------------
// QuadInt: elements of R = Z[w]
// ---------------------------------------------------------------------------

/// An element `a + b*w` of the ring of integers.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct QuadInt {
    pub a: Int,
    pub b: Int,
    tag: FieldTag,
}

impl QuadInt {
    pub fn new(a: Int, b: Int, tag: FieldTag) -> QuadInt {
        let tag = if b.is_zero() { FieldTag::RATIONAL } else { tag };
        QuadInt { a, b, tag }
    }

    pub fn from_i64(a: i64, b: i64, tag: FieldTag) -> QuadInt {
        QuadInt::new(int(a), int(b), tag)
    }

    pub fn zero() -> QuadInt {
        QuadInt::new(Int::zero(), Int::zero(), FieldTag::RATIONAL)
    }

    pub fn one() -> QuadInt {
        QuadInt::new(Int::one(), Int::zero(), FieldTag::RATIONAL)
    }

    pub fn from_int(a: Int) -> QuadInt {
        QuadInt::new(a, Int::zero(), FieldTag::RATIONAL)
    }

    pub fn tag(&self) -> FieldTag {
        self.tag
    }

    pub fn is_zero(&self) -> bool {
        self.a.is_zero() && self.b.is_zero()
    }

    pub fn is_one(&self) -> bool {
        self.a.is_one() && self.b.is_zero()
    }

    /// Algebraic conjugate: `a + b*w  ->  (a + t*b) - b*w` with `t = w + w'`.
    pub fn conj(&self) -> QuadInt {
        let t = self.tag.omega_trace();
        QuadInt::new(&self.a + &self.b * t, -self.b.clone(), self.tag)
    }

    /// Field norm `x * conj(x)`, a rational integer.
    pub fn norm(&self) -> Int {
        let t = self.tag.omega_trace();
        let n = self.tag.omega_norm();
        &self.a * &self.a + &self.a * &self.b * t + &self.b * &self.b * n
    }

    pub fn trace(&self) -> Int {
        &self.a * 2 + &self.b * self.tag.omega_trace()
    }

    pub fn is_unit(&self) -> bool {
        self.norm().abs().is_one()
    }

    /// Inverse of a unit: `u^-1 = N(u) * conj(u)` since `N(u) = ±1`.
    pub fn unit_inv(&self) -> Result<QuadInt> {
        let n = self.norm();
        if !n.abs().is_one() {
            return Err(Error::NotUnit(format!("{self}")));
        }
        let c = self.conj();
        Ok(QuadInt::new(&c.a * &n, &c.b * &n, c.tag))
    }

    /// Exact division: `Some(self / d)` when `d` divides `self` in `R`.
    pub fn checked_div(&self, d: &QuadInt) -> Option<QuadInt> {
        if d.is_zero() {
            return None;
        }
        let nd = d.norm();
        let num = self * &d.conj();
        let (qa, ra) = num.a.div_rem(&nd);
        let (qb, rb) = num.b.div_rem(&nd);
        if ra.is_zero() && rb.is_zero() {
            Some(QuadInt::new(qa, qb, num.tag.merge(d.tag)))
        } else {
            None
        }
    }

    /// View in the field: `a + b*w = (a + b/k0) + (b/k0) sqrt k`.
    pub fn to_knum(&self) -> KNum {
        if self.tag.is_rational() {
            return KNum::from_rat(Rat::from_integer(self.a.clone()));
        }
        let k0 = rat_int(self.tag.k0);
        let b = Rat::from_integer(self.b.clone()) / k0;
        KNum::new(Rat::from_integer(self.a.clone()) + &b, b, self.tag.k)
    }

    /// Both real embeddings as floats, first then second.
    pub fn to_f64_pair(&self) -> (f64, f64) {
        let x = self.to_knum();
        (x.to_f64(), x.conj().to_f64())
    }

    pub fn pow(&self, e: u32) -> QuadInt {
        let mut acc = QuadInt::one();
        for _ in 0..e {
            acc = &acc * self;
        }
        acc
    }
}

impl<'b> Add<&'b QuadInt> for &QuadInt {
    type Output = QuadInt;
    fn add(self, rhs: &'b QuadInt) -> QuadInt {
        QuadInt::new(&self.a + &rhs.a, &self.b + &rhs.b, self.tag.merge(rhs.tag))
    }
}

impl<'b> Sub<&'b QuadInt> for &QuadInt {
    type Output = QuadInt;
    fn sub(self, rhs: &'b QuadInt) -> QuadInt {
        QuadInt::new(&self.a - &rhs.a, &self.b - &rhs.b, self.tag.merge(rhs.tag))
    }
}

impl<'b> Mul<&'b QuadInt> for &QuadInt {
    type Output = QuadInt;
    fn mul(self, rhs: &'b QuadInt) -> QuadInt {
        let tag = self.tag.merge(rhs.tag);
        // w^2 = n + t*w with t = 2/k0, n = (k - ... ) from w^2 - t w - (-w w') = 0
        let t = tag.omega_trace();
        let n = -tag.omega_norm();
        let bb = &self.b * &rhs.b;
        let a = &self.a * &rhs.a + &bb * n;
        let b = &self.a * &rhs.b + &self.b * &rhs.a + &bb * t;
        QuadInt::new(a, b, tag)
    }
}

impl Neg for &QuadInt {
    type Output = QuadInt;
    fn neg(self) -> QuadInt {
        QuadInt::new(-self.a.clone(), -self.b.clone(), self.tag)
    }
}

impl Add for QuadInt {
    type Output = QuadInt;
    fn add(self, rhs: QuadInt) -> QuadInt {
        &self + &rhs
    }
}

impl Sub for QuadInt {
    type Output = QuadInt;
    fn sub(self, rhs: QuadInt) -> QuadInt {
        &self - &rhs
    }
}

impl Mul for QuadInt {
    type Output = QuadInt;
    fn mul(self, rhs: QuadInt) -> QuadInt {
        &self * &rhs
    }
}

impl Neg for QuadInt {
    type Output = QuadInt;
    fn neg(self) -> QuadInt {
        -&self
    }
}

impl fmt::Display for QuadInt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.b.is_zero() {
            return write!(f, "{}", self.a);
        }
        if self.a.is_zero() {
            if self.b.is_one() {
                return write!(f, "w");
            }
            if self.b == int(-1) {
                return write!(f, "-w");
            }
            return write!(f, "{}*w", self.b);
        }
        let (sign, babs) = if self.b.is_negative() {
            ("-", -self.b.clone())
        } else {
            ("+", self.b.clone())
        };
        if babs.is_one() {
            write!(f, "{}{}w", self.a, sign)
        } else {
            write!(f, "{}{}{}*w", self.a, sign, babs)
        }
    }
}

// ---------------------------------------------------------------------------
// KNum: elements of K = Q(sqrt k)
// ---------------------------------------------------------------------------

/// A field element `p + q * sqrt(k)` with rational `p, q`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct KNum {
    pub p: Rat,
    pub q: Rat,
    k: i64,
}

impl KNum {
    pub fn new(p: Rat, q: Rat, k: i64) -> KNum {
        let k = if q.is_zero() { 0 } else { k };
        KNum { p, q, k }
    }

    pub fn from_rat(p: Rat) -> KNum {
        KNum { p, q: Rat::zero(), k: 0 }
    }

    pub fn from_i64(v: i64) -> KNum {
        KNum::from_rat(rat_int(v))
    }

    pub fn radicand(&self) -> i64 {
        self.k
    }

    pub fn is_zero(&self) -> bool {
        self.p.is_zero() && self.q.is_zero()
    }

    pub fn is_rational(&self) -> bool {
        self.q.is_zero()
    }

    fn merge_k(&self, other: &KNum) -> i64 {
        if self.k == 0 {
            other.k
        } else if other.k == 0 || self.k == other.k {
            self.k
        } else {
            panic!("mixed fields: sqrt {} vs sqrt {}", self.k, other.k);
        }
    }

    pub fn conj(&self) -> KNum {
        KNum::new(self.p.clone(), -self.q.clone(), self.k)
    }

    /// `x * conj(x) = p^2 - k q^2`, rational.
    pub fn norm(&self) -> Rat {
        &self.p * &self.p - &self.q * &self.q * rat_int(self.k)
    }

    /// Exact sign of `p + q sqrt k`. Mixed-sign coefficients are resolved by
    /// comparing `p^2` with `q^2 k`.
    pub fn sign(&self) -> i32 {
        let sp = rat_sign(&self.p);
        let sq = rat_sign(&self.q);
        if sq == 0 {
            return sp;
        }
        if sp == 0 {
            return sq;
        }
        if sp == sq {
            return sp;
        }
        // p and q of opposite signs, both nonzero
        let pp = &self.p * &self.p;
        let qqk = &self.q * &self.q * rat_int(self.k);
        let c = if pp > qqk {
            1
        } else if pp < qqk {
            -1
        } else {
            0 // unreachable for square-free k > 1
        };
        if sp > 0 {
            c
        } else {
            -c
        }
    }

    /// Absolute value in the first embedding.
    pub fn abs(&self) -> KNum {
        if self.sign() < 0 {
            -self.clone()
        } else {
            self.clone()
        }
    }

    pub fn inv(&self) -> KNum {
        let n = self.norm();
        assert!(!n.is_zero(), "division by zero in K");
        KNum::new(&self.p / &n, -(&self.q / &n), self.k)
    }

    pub fn to_f64(&self) -> f64 {
        let p = self.p.to_f64().unwrap_or(f64::NAN);
        let q = self.q.to_f64().unwrap_or(f64::NAN);
        p + q * (self.k as f64).sqrt()
    }

    pub fn pow_i(&self, e: i64) -> KNum {
        let base = if e < 0 { self.inv() } else { self.clone() };
        let mut acc = KNum::from_i64(1);
        for _ in 0..e.unsigned_abs() {
            acc = acc * base.clone();
        }
        acc
    }

    /// Largest integer `n <= self`, decided exactly.
    pub fn floor_int(&self) -> Int {
        if self.q.is_zero() {
            return self.p.floor().to_integer();
        }
        // Bracket sqrt k by rationals until floor(p + q lo) and
        // floor(p + q hi) agree; self is irrational so this terminates.
        let k = Int::from(self.k);
        let mut shift = 32u32;
        loop {
            let scale: Int = Int::one() << shift;
            let lo_num = (&k * &scale * &scale).sqrt();
            let hi_num = &lo_num + 1;
            let lo = Rat::new(lo_num, scale.clone());
            let hi = Rat::new(hi_num, scale.clone());
            let (c1, c2) = if self.q.is_positive() {
                (&self.p + &self.q * lo, &self.p + &self.q * hi)
            } else {
                (&self.p + &self.q * hi, &self.p + &self.q * lo)
            };
            let f1 = c1.floor().to_integer();
            let f2 = c2.floor().to_integer();
            if f1 == f2 {
                return f1;
            }
            shift *= 2;
            assert!(shift <= 1 << 16, "floor_int failed to converge");
        }
    }

    /// Nearest integer, ties rounded up.
    pub fn round_int(&self) -> Int {
        (self.clone() + KNum::from_rat(Rat::new(Int::one(), int(2)))).floor_int()
    }
}

fn rat_sign(r: &Rat) -> i32 {
    if r.is_zero() {
        0
    } else if r.is_positive() {
        1
    } else {
        -1
    }
}

impl Add for KNum {
    type Output = KNum;
    fn add(self, rhs: KNum) -> KNum {
        let k = self.merge_k(&rhs);
        KNum::new(self.p + rhs.p, self.q + rhs.q, k)
    }
}

impl Sub for KNum {
    type Output = KNum;
    fn sub(self, rhs: KNum) -> KNum {
        let k = self.merge_k(&rhs);
        KNum::new(self.p - rhs.p, self.q - rhs.q, k)
    }
}

impl Mul for KNum {
    type Output = KNum;
    fn mul(self, rhs: KNum) -> KNum {
        let k = self.merge_k(&rhs);
        let p = &self.p * &rhs.p + &self.q * &rhs.q * rat_int(k);
        let q = &self.p * &rhs.q + &self.q * &rhs.p;
        KNum::new(p, q, k)
    }
}

impl Div for KNum {
    type Output = KNum;
    fn div(self, rhs: KNum) -> KNum {
        #[allow(clippy::suspicious_arithmetic_impl)]
        {
            self * rhs.inv()
        }
    }
}

impl Neg for KNum {
    type Output = KNum;
    fn neg(self) -> KNum {
        KNum::new(-self.p, -self.q, self.k)
    }
}

impl PartialOrd for KNum {
    fn partial_cmp(&self, other: &KNum) -> Option<std::cmp::Ordering> {
        let d = self.clone() - other.clone();
        Some(match d.sign() {
            0 => std::cmp::Ordering::Equal,
            s if s < 0 => std::cmp::Ordering::Less,
            _ => std::cmp::Ordering::Greater,
        })
    }
}

impl Zero for KNum {
    fn zero() -> KNum {
        KNum::from_i64(0)
    }
    fn is_zero(&self) -> bool {
        KNum::is_zero(self)
    }
}

impl One for KNum {
    fn one() -> KNum {
        KNum::from_i64(1)
    }
}

impl fmt::Display for KNum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.q.is_zero() {
            return write!(f, "{}", self.p);
        }
        write!(f, "{} + {}*sqrt({})", self.p, self.q, self.k)
    }
}

/// `Some(sqrt r)` when the rational `r` is a perfect square.
pub fn rational_sqrt(r: &Rat) -> Option<Rat> {
    if r.is_negative() {
        return None;
    }
    if r.is_zero() {
        return Some(Rat::zero());
    }
    let n = r.numer();
    let d = r.denom();
    let sn = n.sqrt();
    let sd = d.sqrt();
    if &(&sn * &sn) == n && &(&sd * &sd) == d {
        Some(Rat::new(sn, sd))
    } else {
        None
    }
}

// ---------------------------------------------------------------------------
// GroupElem: PSL2(R)
// ---------------------------------------------------------------------------

/// A matrix `[[a, b], [c, d]]` in `SL2(R)` stored modulo the global sign,
/// so equality and hashing are equality in `PSL2(R)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GroupElem {
    pub a: QuadInt,
    pub b: QuadInt,
    pub c: QuadInt,
    pub d: QuadInt,
}

impl GroupElem {
    pub fn new(a: QuadInt, b: QuadInt, c: QuadInt, d: QuadInt) -> Result<GroupElem> {
        let det = &(&a * &d) - &(&b * &c);
        if !det.is_one() {
            return Err(Error::Pipeline(format!(
                "matrix determinant is {det}, expected 1"
            )));
        }
        Ok(GroupElem { a, b, c, d }.normalize_sign())
    }

    fn coeff_tuple(&self) -> [&Int; 8] {
        [
            &self.a.a, &self.a.b, &self.b.a, &self.b.b, &self.c.a, &self.c.b, &self.d.a,
            &self.d.b,
        ]
    }

    fn normalize_sign(self) -> GroupElem {
        let flip = self
            .coeff_tuple()
            .iter()
            .find(|v| !v.is_zero())
            .map(|v| v.is_negative())
            .unwrap_or(false);
        if flip {
            GroupElem {
                a: -&self.a,
                b: -&self.b,
                c: -&self.c,
                d: -&self.d,
            }
        } else {
            self
        }
    }

    pub fn identity() -> GroupElem {
        GroupElem {
            a: QuadInt::one(),
            b: QuadInt::zero(),
            c: QuadInt::zero(),
            d: QuadInt::one(),
        }
    }

    pub fn is_identity(&self) -> bool {
        self == &GroupElem::identity()
    }

    pub fn mul(&self, o: &GroupElem) -> GroupElem {
        GroupElem {
            a: &(&self.a * &o.a) + &(&self.b * &o.c),
            b: &(&self.a * &o.b) + &(&self.b * &o.d),
            c: &(&self.c * &o.a) + &(&self.d * &o.c),
            d: &(&self.c * &o.b) + &(&self.d * &o.d),
        }
        .normalize_sign()
    }

    pub fn inv(&self) -> GroupElem {
        GroupElem {
            a: self.d.clone(),
            b: -&self.b,
            c: -&self.c,
            d: self.a.clone(),
        }
        .normalize_sign()
    }

    pub fn pow(&self, e: u32) -> GroupElem {
        let mut acc = GroupElem::identity();
        for _ in 0..e {
            acc = acc.mul(self);
        }
        acc
    }

    pub fn det(&self) -> QuadInt {
        &(&self.a * &self.d) - &(&self.b * &self.c)
    }
}

impl fmt::Display for GroupElem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[[{}, {}], [{}, {}]]", self.a, self.b, self.c, self.d)
    }
}

// ---------------------------------------------------------------------------
// FieldCtx
// ---------------------------------------------------------------------------

/// Square-free `k < 100` whose real quadratic ring of integers has class
/// number one. Fields off this list are rejected by the pipeline stages
/// that assume a principal ideal domain.
pub const CLASS_NUMBER_ONE: [i64; 38] = [
    2, 3, 5, 6, 7, 11, 13, 14, 17, 19, 21, 22, 23, 29, 31, 33, 37, 38, 41, 43, 46, 47, 53, 57,
    59, 61, 62, 67, 69, 71, 73, 77, 83, 86, 89, 93, 94, 97,
];

/// Real quadratic `k` for which rounding to the nearest ring element makes
/// the Euclidean descent on norms terminate.
pub const NORM_EUCLIDEAN: [i64; 16] = [2, 3, 5, 6, 7, 11, 13, 17, 19, 21, 29, 33, 37, 41, 57, 73];

/// The field data every stage hangs off: `k`, `k0` and the fundamental unit.
#[derive(Debug, Clone)]
pub struct FieldCtx {
    pub k: i64,
    pub k0: i64,
    pub eps0: QuadInt,
    tag: FieldTag,
}

pub fn is_square_free(k: i64) -> bool {
    if k < 1 {
        return false;
    }
    let mut p = 2i64;
    while p * p <= k {
        if k % (p * p) == 0 {
            return false;
        }
        p += 1;
    }
    true
}

impl FieldCtx {
    /// Field data for `Q(sqrt k)`; rejects `k <= 1` and non-square-free `k`.
    pub fn new(k: i64) -> Result<FieldCtx> {
        if k <= 1 {
            return Err(Error::InvalidField(format!("k = {k} must exceed 1")));
        }
        if !is_square_free(k) {
            return Err(Error::InvalidField(format!("k = {k} is not square-free")));
        }
        let k0 = if k % 4 == 1 { 2 } else { 1 };
        let tag = FieldTag { k, k0 };
        let eps0 = fundamental_unit_cf(k, k0, tag)?;
        Ok(FieldCtx { k, k0, eps0, tag })
    }

    /// As `new`, but additionally requires class number one.
    pub fn new_pid(k: i64) -> Result<FieldCtx> {
        let ctx = FieldCtx::new(k)?;
        if !CLASS_NUMBER_ONE.contains(&k) {
            return Err(Error::UnsupportedField(format!(
                "k = {k} is not on the class-number-one list"
            )));
        }
        Ok(ctx)
    }

    pub fn tag(&self) -> FieldTag {
        self.tag
    }

    pub fn is_norm_euclidean(&self) -> bool {
        NORM_EUCLIDEAN.contains(&self.k)
    }

    pub fn omega(&self) -> QuadInt {
        QuadInt::from_i64(0, 1, self.tag)
    }

    pub fn omega_knum(&self) -> KNum {
        self.omega().to_knum()
    }

    pub fn omega_conj_knum(&self) -> KNum {
        self.omega().conj().to_knum()
    }

    pub fn eps0_knum(&self) -> KNum {
        self.eps0.to_knum()
    }

    /// `eps0^m` for any integer `m` (negative powers via the unit inverse).
    pub fn eps0_pow(&self, m: i64) -> QuadInt {
        let base = if m < 0 {
            self.eps0.unit_inv().expect("eps0 is a unit")
        } else {
            self.eps0.clone()
        };
        base.pow(m.unsigned_abs() as u32)
    }

    pub fn eps0_pow_knum(&self, m: i64) -> KNum {
        self.eps0_pow(m).to_knum()
    }

    /// Generator `P1 = [[1, 1], [0, 1]]`.
    pub fn p1(&self) -> GroupElem {
        GroupElem::new(
            QuadInt::one(),
            QuadInt::one(),
            QuadInt::zero(),
            QuadInt::one(),
        )
        .unwrap()
    }

    /// Generator `P2 = [[1, w], [0, 1]]`.
    pub fn p2(&self) -> GroupElem {
        GroupElem::new(QuadInt::one(), self.omega(), QuadInt::zero(), QuadInt::one()).unwrap()
    }

    /// Generator `P3 = [[eps0, 0], [0, eps0^-1]]`.
    pub fn p3(&self) -> GroupElem {
        GroupElem::new(
            self.eps0.clone(),
            QuadInt::zero(),
            QuadInt::zero(),
            self.eps0.unit_inv().unwrap(),
        )
        .unwrap()
    }

    /// Upper triangular `[[eps0^m, b], [0, eps0^-m]]`.
    pub fn upper(&self, m: i64, b: &QuadInt) -> GroupElem {
        GroupElem::new(
            self.eps0_pow(m),
            b.clone(),
            QuadInt::zero(),
            self.eps0_pow(-m),
        )
        .unwrap()
    }

    /// Index `[R : cR + dR]` of the module spanned by `c, cw, d, dw`,
    /// computed from the Hermite normal form of its coordinate matrix.
    /// The pair generates `R` exactly when this is 1.
    pub fn ideal_norm(&self, c: &QuadInt, d: &QuadInt) -> Result<Int> {
        if c.is_zero() && d.is_zero() {
            return Err(Error::NotCoprime("(0, 0) spans nothing".into()));
        }
        let t = int(self.tag.omega_trace());
        let n = int(-self.tag.omega_norm());
        let row_mul = |x: &QuadInt| -> [Int; 2] { [&x.b * &n, &x.a + &x.b * &t] };
        let mut rows: Vec<[Int; 2]> = vec![
            [c.a.clone(), c.b.clone()],
            row_mul(c),
            [d.a.clone(), d.b.clone()],
            row_mul(d),
        ];
        // Column-echelon reduction by unimodular row operations.
        let e11 = reduce_column(&mut rows, 0);
        let e22 = reduce_column(&mut rows[1..], 1);
        if e11.is_zero() || e22.is_zero() {
            return Err(Error::NotCoprime(format!("({c}, {d}) spans a rank-1 module")));
        }
        Ok((e11 * e22).abs())
    }

    pub fn is_coprime_pair(&self, c: &QuadInt, d: &QuadInt) -> bool {
        matches!(self.ideal_norm(c, d), Ok(n) if n.is_one())
    }

    /// Nearest ring element to a field element, rounding both coordinates on
    /// the `(1, w)` basis.
    pub fn round_to_ring(&self, x: &KNum) -> QuadInt {
        // x = p + q sqrt k = (p - q) + q*k0*w
        let c1 = KNum::from_rat(&x.p - &x.q);
        let c2 = KNum::from_rat(&x.q * rat_int(self.k0));
        QuadInt::new(c1.round_int(), c2.round_int(), self.tag)
    }

    /// Complete a coprime row `(c, d)` to `[[a, b], [c, d]]` of determinant 1.
    ///
    /// Euclidean descent with nearest-element rounding; on fields where that
    /// descent is not guaranteed to shrink norms, a bounded box search over
    /// `a` takes over once the descent stalls.
    pub fn complete_to_matrix(&self, c: &QuadInt, d: &QuadInt) -> Result<GroupElem> {
        let idx = self.ideal_norm(c, d)?;
        if !idx.is_one() {
            return Err(Error::NotCoprime(format!(
                "({c}, {d}) generates an ideal of index {idx}"
            )));
        }
        if let Some(g) = self.complete_euclidean(c, d) {
            return Ok(g);
        }
        self.complete_box_search(c, d)
    }

    fn complete_euclidean(&self, c: &QuadInt, d: &QuadInt) -> Option<GroupElem> {
        let mut r0 = c.clone();
        let mut r1 = d.clone();
        let mut s0 = QuadInt::one();
        let mut s1 = QuadInt::zero();
        let mut t0 = QuadInt::zero();
        let mut t1 = QuadInt::one();
        let mut steps = 0;
        while !r1.is_zero() {
            steps += 1;
            if steps > 256 {
                return None;
            }
            let q = self.round_to_ring(&(r0.to_knum() / r1.to_knum()));
            let r2 = &r0 - &(&q * &r1);
            if r2.norm().abs() >= r1.norm().abs() && !r2.is_zero() {
                return None; // descent stalled; caller falls back
            }
            r0 = std::mem::replace(&mut r1, r2);
            let s2 = &s0 - &(&q * &s1);
            s0 = std::mem::replace(&mut s1, s2);
            let t2 = &t0 - &(&q * &t1);
            t0 = std::mem::replace(&mut t1, t2);
        }
        // r0 = s0*c + t0*d is a unit u; then (u^-1 t0) d - (-u^-1 s0) c = 1.
        let u_inv = r0.unit_inv().ok()?;
        let a = &u_inv * &t0;
        let b = -&(&u_inv * &s0);
        GroupElem::new(a, b, c.clone(), d.clone()).ok()
    }

    fn complete_box_search(&self, c: &QuadInt, d: &QuadInt) -> Result<GroupElem> {
        if c.is_zero() {
            let a = d.unit_inv()?;
            return GroupElem::new(a, QuadInt::zero(), c.clone(), d.clone());
        }
        let mut radius = 2i64;
        while radius <= 64 {
            for aa in -radius..=radius {
                for ab in -radius..=radius {
                    let a = QuadInt::from_i64(aa, ab, self.tag);
                    let num = &(&a * d) - &QuadInt::one();
                    if let Some(b) = num.checked_div(c) {
                        return GroupElem::new(a, b, c.clone(), d.clone());
                    }
                }
            }
            radius *= 2;
        }
        Err(Error::CompletionFailed(format!(
            "no completion of ({c}, {d}) within box radius 64"
        )))
    }

    /// Write a unit as `sign * eps0^m`, exactly.
    pub fn unit_log(&self, u: &QuadInt) -> Result<(i32, i64)> {
        if !u.is_unit() {
            return Err(Error::NotUnit(format!("{u} has norm {}", u.norm())));
        }
        let uk = u.to_knum();
        let sign = uk.sign();
        let mut v = if sign < 0 { -uk } else { uk };
        let one = KNum::from_i64(1);
        let eps = self.eps0_knum();
        let eps_inv = self.eps0.unit_inv()?.to_knum();
        let mut m = 0i64;
        let mut steps = 0;
        while v != one {
            steps += 1;
            if steps > 1_000_000 {
                return Err(Error::IterationCap(format!("unit_log({u})")));
            }
            if v > one {
                v = v * eps_inv.clone();
                m += 1;
            } else {
                v = v * eps.clone();
                m -= 1;
            }
        }
        Ok((sign, m))
    }

    /// Canonical unit-orbit representative of a pair with `c != 0`: scale by
    /// `±eps0^m` so the first embedding of `c` is positive and lands in
    /// `[sqrt|N(c)|, eps0 * sqrt|N(c)|)`, a window hit exactly once.
    pub fn canonical_pair(&self, c: &QuadInt, d: &QuadInt) -> Result<(QuadInt, QuadInt)> {
        if c.is_zero() {
            return Err(Error::Pipeline("canonical_pair needs c != 0".into()));
        }
        let (mut c, mut d) = (c.clone(), d.clone());
        if c.to_knum().sign() < 0 {
            c = -&c;
            d = -&d;
        }
        let n_abs = KNum::from_rat(Rat::from_integer(c.norm().abs()));
        let eps = &self.eps0;
        let eps_inv = eps.unit_inv()?;
        let eps_sq = self.eps0_pow_knum(2);
        let mut steps = 0;
        loop {
            steps += 1;
            if steps > 100_000 {
                return Err(Error::IterationCap("canonical_pair".into()));
            }
            let csq = (&c * &c).to_knum();
            if csq < n_abs {
                c = &c * eps;
                d = &d * eps;
            } else if csq >= eps_sq.clone() * n_abs.clone() {
                c = &c * &eps_inv;
                d = &d * &eps_inv;
            } else {
                return Ok((c, d));
            }
        }
    }

    pub fn is_canonical_pair(&self, c: &QuadInt, d: &QuadInt) -> bool {
        match self.canonical_pair(c, d) {
            Ok((cc, dd)) => &cc == c && &dd == d,
            Err(_) => false,
        }
    }
}

/// One elimination pass: leaves the gcd of column `col` in the first row,
/// zeros below. Returns that gcd.
fn reduce_column(rows: &mut [[Int; 2]], col: usize) -> Int {
    let m = rows.len();
    loop {
        let mut piv: Option<usize> = None;
        for (i, r) in rows.iter().enumerate() {
            if r[col].is_zero() {
                continue;
            }
            match piv {
                None => piv = Some(i),
                Some(p) if r[col].abs() < rows[p][col].abs() => piv = Some(i),
                _ => {}
            }
        }
        let Some(p) = piv else {
            return Int::zero();
        };
        rows.swap(0, p);
        let mut done = true;
        for i in 1..m {
            if rows[i][col].is_zero() {
                continue;
            }
            let q = rows[i][col].div_floor(&rows[0][col]);
            let reduced: [Int; 2] =
                [&rows[i][0] - &q * &rows[0][0], &rows[i][1] - &q * &rows[0][1]];
            rows[i] = reduced;
            if !rows[i][col].is_zero() {
                done = false;
            }
        }
        if done {
            return rows[0][col].abs();
        }
    }
}

/// Fundamental unit from the continued fraction of `sqrt k` (or of
/// `(1 + sqrt k)/2` when `k = 1 mod 4`): the first convergent whose attached
/// element `(p - q) + q*w` is a unit.
fn fundamental_unit_cf(k: i64, k0: i64, tag: FieldTag) -> Result<QuadInt> {
    let d = int(k);
    let sqrt_d = d.sqrt();
    let (mut pp, mut qq) = if k0 == 2 {
        (Int::one(), int(2))
    } else {
        (Int::zero(), Int::one())
    };
    // convergent recurrence p_i = a_i p_{i-1} + p_{i-2}
    let mut p_m2 = Int::zero();
    let mut p_m1 = Int::one();
    let mut q_m2 = Int::one();
    let mut q_m1 = Int::zero();
    for _ in 0..20_000 {
        let a = (&pp + &sqrt_d).div_floor(&qq);
        let p = &a * &p_m1 + &p_m2;
        let q = &a * &q_m1 + &q_m2;
        let cand = QuadInt::new(&p - &q, q.clone(), tag);
        if cand.is_unit() {
            return Ok(cand);
        }
        p_m2 = std::mem::replace(&mut p_m1, p);
        q_m2 = std::mem::replace(&mut q_m1, q);
        pp = &a * &qq - &pp;
        qq = (&d - &pp * &pp) / &qq;
    }
    Err(Error::IterationCap(format!(
        "continued fraction of sqrt {k} found no unit"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;
    use proptest::prelude::*;

    fn ctx(k: i64) -> FieldCtx {
        FieldCtx::new(k).unwrap()
    }

    #[test]
    fn field_ctx_basics() {
        let c2 = ctx(2);
        assert_eq!((c2.k, c2.k0), (2, 1));
        let c5 = ctx(5);
        assert_eq!((c5.k, c5.k0), (5, 2));
        assert!(FieldCtx::new(4).is_err());
        assert!(FieldCtx::new(12).is_err());
        assert!(FieldCtx::new(1).is_err());
        assert!(FieldCtx::new(-3).is_err());
        assert!(FieldCtx::new_pid(10).is_err()); // class number 2
    }

    #[test]
    fn fundamental_units_match_known_values() {
        // eps0 = 1 + sqrt 2 = w
        assert_eq!(ctx(2).eps0, QuadInt::from_i64(0, 1, ctx(2).tag()));
        // eps0 = (1 + sqrt 5)/2 = w, norm -1
        let c5 = ctx(5);
        assert_eq!(c5.eps0, QuadInt::from_i64(0, 1, c5.tag()));
        assert_eq!(c5.eps0.norm(), int(-1));
        // eps0 = 2 + sqrt 3 = 1 + w
        assert_eq!(ctx(3).eps0, QuadInt::from_i64(1, 1, ctx(3).tag()));
        // eps0 = 5 + 2 sqrt 6 = 3 + 2w
        assert_eq!(ctx(6).eps0, QuadInt::from_i64(3, 2, ctx(6).tag()));
        // eps0 = 4 + sqrt 17 = 3 + 2w
        assert_eq!(ctx(17).eps0, QuadInt::from_i64(3, 2, ctx(17).tag()));
    }

    #[test]
    fn cf_unit_agrees_with_pell_oracle_small_k() {
        for k in [2i64, 3, 5, 6, 7, 13, 17, 29] {
            let c = ctx(k);
            let brute = oracle::fundamental_unit_brute(k, 10_000_000).unwrap();
            assert_eq!(c.eps0, brute, "k = {k}");
        }
    }

    #[test]
    fn cf_unit_consistent_with_capped_oracle_up_to_200() {
        for k in 2..=200i64 {
            if !is_square_free(k) {
                continue;
            }
            let c = ctx(k);
            assert!(c.eps0.is_unit(), "k = {k}");
            assert!(c.eps0.to_knum() > KNum::from_i64(1), "k = {k}");
            let cap = 200_000u64;
            match oracle::fundamental_unit_brute(k, cap) {
                Some(brute) => assert_eq!(c.eps0, brute, "k = {k}"),
                None => assert!(
                    c.eps0.b > int(cap as i64),
                    "k = {k}: oracle found nothing below the cap, so the CF unit must sit above it"
                ),
            }
        }
    }

    #[test]
    fn completion_works_across_supported_fields() {
        for k in NORM_EUCLIDEAN {
            let c = ctx(k);
            let mut done = 0;
            'outer: for ca in -4i64..=4 {
                for cb in -4i64..=4 {
                    for (da, db) in [(1, 0), (0, 1), (2, -1), (-3, 2)] {
                        let cc = QuadInt::from_i64(ca, cb, c.tag());
                        let dd = QuadInt::from_i64(da, db, c.tag());
                        if !c.is_coprime_pair(&cc, &dd) {
                            continue;
                        }
                        let g = c.complete_to_matrix(&cc, &dd).unwrap();
                        assert!(g.det().is_one(), "k = {k}: ({cc}, {dd})");
                        done += 1;
                        if done > 20 {
                            break 'outer;
                        }
                    }
                }
            }
            assert!(done > 10, "k = {k}: too few coprime pairs exercised");
        }
    }

    #[test]
    fn sign_examples() {
        assert_eq!(KNum::new(Rat::zero(), Rat::zero(), 2).sign(), 0);
        assert_eq!(KNum::new(rat_int(-1), rat_int(1), 2).sign(), 1);
        assert_eq!(KNum::new(rat_int(3), rat_int(-2), 2).sign(), 1);
        assert_eq!(KNum::new(rat_int(-3), rat_int(2), 2).sign(), -1);
        assert_eq!(KNum::new(rat_int(2), rat_int(-2), 2).sign(), -1);
    }

    #[test]
    fn ideal_norm_examples() {
        let c2 = ctx(2);
        let one = QuadInt::one();
        let zero = QuadInt::zero();
        assert_eq!(c2.ideal_norm(&one, &zero).unwrap(), int(1));
        assert_eq!(c2.ideal_norm(&zero, &one).unwrap(), int(1));
        // (2, sqrt 2): sqrt 2 = w - 1, ideal (sqrt 2), index 2
        let two = QuadInt::from_int(int(2));
        let sqrt2 = QuadInt::from_i64(-1, 1, c2.tag());
        assert_eq!(c2.ideal_norm(&two, &sqrt2).unwrap(), int(2));
        assert!(c2.ideal_norm(&zero, &zero).is_err());
    }

    #[test]
    fn complete_to_matrix_examples() {
        let c2 = ctx(2);
        let g = c2
            .complete_to_matrix(&QuadInt::one(), &QuadInt::zero())
            .unwrap();
        assert_eq!(
            g,
            GroupElem::new(
                QuadInt::zero(),
                QuadInt::from_i64(-1, 0, c2.tag()),
                QuadInt::one(),
                QuadInt::zero()
            )
            .unwrap()
        );
        let g = c2
            .complete_to_matrix(&QuadInt::zero(), &QuadInt::one())
            .unwrap();
        assert!(g.is_identity());
        let sqrt2 = QuadInt::from_i64(-1, 1, c2.tag());
        let g = c2.complete_to_matrix(&sqrt2, &QuadInt::one()).unwrap();
        assert!(g.a.is_one() && g.b.is_zero());
        // non-coprime pair rejected
        let two = QuadInt::from_int(int(2));
        assert!(c2.complete_to_matrix(&two, &sqrt2).is_err());
    }

    #[test]
    fn unit_log_examples() {
        let c2 = ctx(2);
        assert_eq!(c2.unit_log(&QuadInt::one()).unwrap(), (1, 0));
        let e2 = c2.eps0.pow(2);
        assert_eq!(c2.unit_log(&e2).unwrap(), (1, 2));
        // -1 - sqrt2 = -eps0
        let u = QuadInt::from_i64(0, -1, c2.tag());
        assert_eq!(c2.unit_log(&u).unwrap(), (-1, 1));
        let inv = c2.eps0.unit_inv().unwrap();
        assert_eq!(c2.unit_log(&inv).unwrap(), (1, -1));
        assert!(c2.unit_log(&QuadInt::from_int(int(3))).is_err());
    }

    #[test]
    fn canonical_pair_window_is_unique() {
        for k in [2i64, 5, 13] {
            let c = ctx(k);
            let base = (
                QuadInt::from_i64(3, 1, c.tag()),
                QuadInt::from_i64(-1, 2, c.tag()),
            );
            if base.0.is_zero() {
                continue;
            }
            let canon = c.canonical_pair(&base.0, &base.1).unwrap();
            for m in -3..=3 {
                for s in [1i64, -1] {
                    let u = {
                        let e = c.eps0_pow(m);
                        if s < 0 {
                            -&e
                        } else {
                            e
                        }
                    };
                    let scaled = (&u * &base.0, &u * &base.1);
                    let c2 = c.canonical_pair(&scaled.0, &scaled.1).unwrap();
                    assert_eq!(c2, canon, "k={k} m={m} s={s}");
                }
            }
            assert!(c.is_canonical_pair(&canon.0, &canon.1));
        }
    }

    #[test]
    fn knum_floor_and_round() {
        let c2 = ctx(2);
        let w = c2.omega_knum(); // 1 + sqrt 2 = 2.414...
        assert_eq!(w.floor_int(), int(2));
        assert_eq!((-w.clone()).floor_int(), int(-3));
        assert_eq!(w.round_int(), int(2));
        assert_eq!(KNum::from_rat(Rat::new(int(5), int(2))).round_int(), int(3));
        assert_eq!(KNum::from_rat(Rat::new(int(-5), int(2))).round_int(), int(-2));
    }

    proptest! {
        #[test]
        fn ring_laws(k_idx in 0usize..4, xa in -30i64..30, xb in -30i64..30,
                     ya in -30i64..30, yb in -30i64..30) {
            let k = [2i64, 3, 5, 13][k_idx];
            let c = ctx(k);
            let x = QuadInt::from_i64(xa, xb, c.tag());
            let y = QuadInt::from_i64(ya, yb, c.tag());
            // norm multiplicativity
            prop_assert_eq!((&x * &y).norm(), x.norm() * y.norm());
            // conj is a ring automorphism of order 2
            prop_assert_eq!(x.conj().conj(), x.clone());
            prop_assert_eq!((&x * &y).conj(), &x.conj() * &y.conj());
            prop_assert_eq!((&x + &y).conj(), &x.conj() + &y.conj());
            // trace and norm are rational integers by construction (Int),
            // and match the K-side computation
            let xk = x.to_knum();
            prop_assert_eq!(xk.clone().norm(), Rat::from_integer(x.norm()));
            prop_assert_eq!(xk.clone() + x.conj().to_knum(), KNum::from_rat(Rat::from_integer(x.trace())));
        }

        #[test]
        fn knum_field_axioms(k_idx in 0usize..3, p1 in -20i64..20, q1 in -20i64..20,
                             p2 in -20i64..20, q2 in -20i64..20) {
            let k = [2i64, 5, 7][k_idx];
            let x = KNum::new(rat_int(p1), rat_int(q1), k);
            let y = KNum::new(rat_int(p2), rat_int(q2), k);
            prop_assert_eq!(x.clone() + y.clone(), y.clone() + x.clone());
            prop_assert_eq!(x.clone() * y.clone(), y.clone() * x.clone());
            if !y.is_zero() {
                let z = x.clone() / y.clone();
                prop_assert_eq!(z * y.clone(), x.clone());
            }
            // sign agrees with float evaluation away from zero
            let f = x.to_f64();
            if f.abs() > 1e-9 {
                prop_assert_eq!(x.sign(), if f > 0.0 { 1 } else { -1 });
            }
        }

        #[test]
        fn unit_scaling_preserves_ideal_norm(ca in -8i64..8, cb in -8i64..8,
                                             da in -8i64..8, db in -8i64..8, m in -2i64..3) {
            let c5 = ctx(5);
            let c = QuadInt::from_i64(ca, cb, c5.tag());
            let d = QuadInt::from_i64(da, db, c5.tag());
            prop_assume!(!c.is_zero() || !d.is_zero());
            let u = c5.eps0_pow(m);
            let n1 = c5.ideal_norm(&c, &d).unwrap();
            let n2 = c5.ideal_norm(&(&u * &c), &(&u * &d)).unwrap();
            prop_assert_eq!(n1, n2);
        }

        #[test]
        fn completion_det_is_one(k_idx in 0usize..3, ca in -6i64..6, cb in -6i64..6,
                                 da in -6i64..6, db in -6i64..6) {
            let k = [2i64, 5, 13][k_idx];
            let cx = ctx(k);
            let c = QuadInt::from_i64(ca, cb, cx.tag());
            let d = QuadInt::from_i64(da, db, cx.tag());
            prop_assume!(cx.is_coprime_pair(&c, &d));
            let g = cx.complete_to_matrix(&c, &d).unwrap();
            prop_assert!(g.det().is_one());
            // second row survives up to the global sign
            let row_ok = (g.c == c && g.d == d) || (g.c == -&c && g.d == -&d);
            prop_assert!(row_ok);
        }
    }
}
