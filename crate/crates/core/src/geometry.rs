//! Points of `H^2 x H^2`, the `PSL2(R)` action, and the floor functions.
//!
//! A point is stored as `(x1, x2, y1^2, y2^2)`: the action formulas and the
//! norm `|cZ + d|` are rational in the squares of the imaginary parts, so
//! with exact scalars no square root ever appears. The same formulas run on
//! `f64` for the root finding; [`Scalar`] abstracts the two lanes.

use num_traits::{One, Signed, ToPrimitive, Zero};
use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::ring::{rational_sqrt, FieldCtx, GroupElem, KNum, QuadInt, Rat};
use crate::{Error, Result};

/// Scalar lane: exact (`KNum`) or floating (`f64`).
pub trait Scalar:
    Clone
    + PartialEq
    + PartialOrd
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Zero
    + One
{
    /// Both real embeddings of a ring element, first and second.
    fn embed(ctx: &FieldCtx, x: &QuadInt) -> (Self, Self);
    fn embed_rat(r: &Rat) -> Self;
}

impl Scalar for KNum {
    fn embed(_ctx: &FieldCtx, x: &QuadInt) -> (KNum, KNum) {
        (x.to_knum(), x.conj().to_knum())
    }
    fn embed_rat(r: &Rat) -> KNum {
        KNum::from_rat(r.clone())
    }
}

impl Scalar for f64 {
    fn embed(_ctx: &FieldCtx, x: &QuadInt) -> (f64, f64) {
        x.to_f64_pair()
    }
    fn embed_rat(r: &Rat) -> f64 {
        r.to_f64().unwrap_or(f64::NAN)
    }
}

/// A point of `H^2 x H^2` in `(x1, x2, y1^2, y2^2)` coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Point<S: Scalar> {
    pub x1: S,
    pub x2: S,
    pub y1sq: S,
    pub y2sq: S,
}

pub type FloatPoint = Point<f64>;

impl<S: Scalar> Point<S> {
    pub fn new(x1: S, x2: S, y1sq: S, y2sq: S) -> Point<S> {
        Point { x1, x2, y1sq, y2sq }
    }

    /// `r^2 = y1^2 / y2^2`.
    pub fn rsq(&self) -> S {
        self.y1sq.clone() / self.y2sq.clone()
    }

    /// `h^2 = y1^2 * y2^2`.
    pub fn hsq(&self) -> S {
        self.y1sq.clone() * self.y2sq.clone()
    }
}

impl Point<f64> {
    pub fn coords_srh(&self, ctx: &FieldCtx) -> (f64, f64, f64, f64) {
        let (s1, s2) = s_coords(ctx, self);
        (s1, s2, (self.y1sq / self.y2sq).sqrt(), (self.y1sq * self.y2sq).sqrt())
    }
}

/// A point in the `(s1, s2, r, h)` coordinates with rational entries.
/// `x1 = s1 + s2 w`, `x2 = s1 + s2 w'`, and with `r = y1/y2`, `h = y1 y2`:
/// `y1^2 = r h`, `y2^2 = h/r`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SRPoint {
    pub s1: Rat,
    pub s2: Rat,
    pub r: Rat,
    pub h: Rat,
}

impl SRPoint {
    pub fn new(s1: Rat, s2: Rat, r: Rat, h: Rat) -> Result<SRPoint> {
        if !r.is_positive() || !h.is_positive() {
            return Err(Error::Pipeline(format!("SRPoint needs r, h > 0: r={r}, h={h}")));
        }
        Ok(SRPoint { s1, s2, r, h })
    }

    pub fn from_i64(s1: i64, s2: i64, r: i64, h: i64) -> SRPoint {
        let i = |v: i64| Rat::from_integer(v.into());
        SRPoint::new(i(s1), i(s2), i(r), i(h)).unwrap()
    }

    pub fn to_point<S: Scalar>(&self, ctx: &FieldCtx) -> Point<S> {
        let (w1, w2) = S::embed(ctx, &ctx.omega());
        let s1 = S::embed_rat(&self.s1);
        let s2 = S::embed_rat(&self.s2);
        let x1 = s1.clone() + s2.clone() * w1;
        let x2 = s1 + s2 * w2;
        let y1sq = S::embed_rat(&(&self.r * &self.h));
        let y2sq = S::embed_rat(&(&self.h / &self.r));
        Point::new(x1, x2, y1sq, y2sq)
    }

    pub fn to_f64(&self, ctx: &FieldCtx) -> Point<f64> {
        self.to_point::<f64>(ctx)
    }
}

/// Recover `(s1, s2, r, h)` from an exact point when all four are rational.
pub fn point_to_sr(ctx: &FieldCtx, p: &Point<KNum>) -> Option<SRPoint> {
    let (s1, s2) = s_coords(ctx, p);
    if !s1.is_rational() || !s2.is_rational() {
        return None;
    }
    let rsq = p.rsq();
    let hsq = p.hsq();
    if !rsq.is_rational() || !hsq.is_rational() {
        return None;
    }
    let r = rational_sqrt(&rsq.p)?;
    let h = rational_sqrt(&hsq.p)?;
    SRPoint::new(s1.p, s2.p, r, h).ok()
}

/// `s1 = (w' x1 - w x2) / (w' - w)`, `s2 = (x1 - x2) / (w - w')`.
pub fn s_coords<S: Scalar>(ctx: &FieldCtx, p: &Point<S>) -> (S, S) {
    let (w1, w2) = S::embed(ctx, &ctx.omega());
    let den = w2.clone() - w1.clone();
    let s1 = (w2 * p.x1.clone() - w1 * p.x2.clone()) / den.clone();
    let s2 = (p.x1.clone() - p.x2.clone()) / (-den);
    (s1, s2)
}

/// Both embeddings of a matrix, ready to act on a point.
#[derive(Debug, Clone)]
pub struct MatEmbed<S> {
    pub a1: S,
    pub b1: S,
    pub c1: S,
    pub d1: S,
    pub a2: S,
    pub b2: S,
    pub c2: S,
    pub d2: S,
}

impl<S: Scalar> MatEmbed<S> {
    pub fn from_group(ctx: &FieldCtx, g: &GroupElem) -> MatEmbed<S> {
        let (a1, a2) = S::embed(ctx, &g.a);
        let (b1, b2) = S::embed(ctx, &g.b);
        let (c1, c2) = S::embed(ctx, &g.c);
        let (d1, d2) = S::embed(ctx, &g.d);
        MatEmbed { a1, b1, c1, d1, a2, b2, c2, d2 }
    }
}

/// Both embeddings of a row `(c, d)`.
#[derive(Debug, Clone)]
pub struct RowEmbed<S> {
    pub c1: S,
    pub d1: S,
    pub c2: S,
    pub d2: S,
}

impl<S: Scalar> RowEmbed<S> {
    pub fn from_pair(ctx: &FieldCtx, c: &QuadInt, d: &QuadInt) -> RowEmbed<S> {
        let (c1, c2) = S::embed(ctx, c);
        let (d1, d2) = S::embed(ctx, d);
        RowEmbed { c1, d1, c2, d2 }
    }
}

fn sq<S: Scalar>(v: S) -> S {
    v.clone() * v
}

/// `|cZ + d| = ((c x1 + d)^2 + c^2 y1^2)((c' x2 + d')^2 + c'^2 y2^2)`.
pub fn norm_czd<S: Scalar>(row: &RowEmbed<S>, p: &Point<S>) -> S {
    let f1 = sq(row.c1.clone() * p.x1.clone() + row.d1.clone())
        + sq(row.c1.clone()) * p.y1sq.clone();
    let f2 = sq(row.c2.clone() * p.x2.clone() + row.d2.clone())
        + sq(row.c2.clone()) * p.y2sq.clone();
    f1 * f2
}

/// Convenience wrapper taking ring data directly.
pub fn norm_czd_pair<S: Scalar>(ctx: &FieldCtx, c: &QuadInt, d: &QuadInt, p: &Point<S>) -> S {
    norm_czd(&RowEmbed::from_pair(ctx, c, d), p)
}

/// The Moebius action on both factors, expressed in `(x, y^2)` data.
pub fn apply_embedded<S: Scalar>(m: &MatEmbed<S>, p: &Point<S>) -> Point<S> {
    let den1 = sq(m.c1.clone() * p.x1.clone() + m.d1.clone())
        + sq(m.c1.clone()) * p.y1sq.clone();
    let den2 = sq(m.c2.clone() * p.x2.clone() + m.d2.clone())
        + sq(m.c2.clone()) * p.y2sq.clone();
    let x1 = ((m.a1.clone() * p.x1.clone() + m.b1.clone())
        * (m.c1.clone() * p.x1.clone() + m.d1.clone())
        + m.a1.clone() * m.c1.clone() * p.y1sq.clone())
        / den1.clone();
    let x2 = ((m.a2.clone() * p.x2.clone() + m.b2.clone())
        * (m.c2.clone() * p.x2.clone() + m.d2.clone())
        + m.a2.clone() * m.c2.clone() * p.y2sq.clone())
        / den2.clone();
    let y1sq = p.y1sq.clone() / sq(den1);
    let y2sq = p.y2sq.clone() / sq(den2);
    Point::new(x1, x2, y1sq, y2sq)
}

pub fn apply<S: Scalar>(ctx: &FieldCtx, g: &GroupElem, p: &Point<S>) -> Point<S> {
    apply_embedded(&MatEmbed::from_group(ctx, g), p)
}

/// Coefficients `(a0, a1, a2)` of `f(v) = a0 + a1 v + a2 v^2`, the norm
/// `|cZ + d|` along the vertical line over `(x1, x2)` at ratio `r`,
/// parametrized by the height `v`.
pub fn height_poly<S: Scalar>(row: &RowEmbed<S>, x1: S, x2: S, r: S) -> (S, S, S) {
    let e1 = row.c1.clone() * x1 + row.d1.clone();
    let e2 = row.c2.clone() * x2 + row.d2.clone();
    let a0 = sq(e1.clone() * e2.clone());
    let a1 = sq(e1) * sq(row.c2.clone()) / r.clone() + sq(e2) * sq(row.c1.clone()) * r;
    let a2 = sq(row.c1.clone() * row.c2.clone());
    (a0, a1, a2)
}

/// Positive height at which the pair's norm surface crosses 1, if any:
/// the positive root of `f(v) = 1`. Requires `c != 0` and `r > 0`.
pub fn h1(ctx: &FieldCtx, c: &QuadInt, d: &QuadInt, x1: f64, x2: f64, r: f64) -> Option<f64> {
    let row = RowEmbed::<f64>::from_pair(ctx, c, d);
    h1_row(&row, x1, x2, r)
}

pub fn h1_row(row: &RowEmbed<f64>, x1: f64, x2: f64, r: f64) -> Option<f64> {
    debug_assert!(row.c1 != 0.0 && row.c2 != 0.0 && r > 0.0);
    let u = (x1 + row.d1 / row.c1).powi(2) / r;
    let w = (x2 + row.d2 / row.c2).powi(2) * r;
    let nsq = (row.c1 * row.c2).powi(2);
    let v = (1.0 / nsq + 0.25 * (u - w).powi(2)).sqrt() - 0.5 * (u + w);
    if v > 0.0 {
        Some(v)
    } else {
        None
    }
}

/// Pre-embedded floor rows for the float lane, kept aligned with the pairs.
#[derive(Debug, Clone)]
pub struct FloorRows {
    pub rows: Vec<RowEmbed<f64>>,
    pub pairs: Vec<(QuadInt, QuadInt)>,
}

impl FloorRows {
    pub fn new(ctx: &FieldCtx, pairs: &[(QuadInt, QuadInt)]) -> FloorRows {
        FloorRows {
            rows: pairs
                .iter()
                .map(|(c, d)| RowEmbed::from_pair(ctx, c, d))
                .collect(),
            pairs: pairs.to_vec(),
        }
    }
}

/// The floor height `h0(s1, s2, r)`: the largest positive root height over
/// all floor pairs, zero when no pair has one.
pub fn h0(ctx: &FieldCtx, pairs: &[(QuadInt, QuadInt)], s1: f64, s2: f64, r: f64) -> f64 {
    let rows = FloorRows::new(ctx, pairs);
    h0_rows(ctx, &rows, s1, s2, r)
}

pub fn h0_rows(ctx: &FieldCtx, rows: &FloorRows, s1: f64, s2: f64, r: f64) -> f64 {
    let (x1, x2) = sr_to_x(ctx, s1, s2);
    rows.rows
        .iter()
        .filter_map(|row| h1_row(row, x1, x2, r))
        .fold(0.0, f64::max)
}

pub fn sr_to_x(ctx: &FieldCtx, s1: f64, s2: f64) -> (f64, f64) {
    let (w1, w2) = ctx.omega().to_f64_pair();
    (s1 + s2 * w1, s1 + s2 * w2)
}
