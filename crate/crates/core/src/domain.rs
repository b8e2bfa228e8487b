//! The fundamental domain: floor pair enumeration, exact membership tests,
//! reduction of arbitrary points, and certified floor witnesses.
//!
//! The domain is cut out by six walls (`|s1| <= 1/2`, `|s2| <= 1/2`,
//! `eps0^-2 <= r <= eps0^2`) and finitely many floor pieces
//! `|cZ + d| >= 1`, one per coprime pair `(c, d)` surviving the norm and
//! embedding bounds. Everything decision-relevant is tested in exact
//! arithmetic; floats only propose candidates.

use num_traits::{One, Signed, ToPrimitive};
use serde_json::{json, Value};

use crate::geometry::{
    apply, h0_rows, h1_row, norm_czd, norm_czd_pair, s_coords, FloorRows, Point, RowEmbed,
};
use crate::ring::{FieldCtx, GroupElem, Int, KNum, QuadInt, Rat};
use crate::{Error, ExactPoint, Result};

/// One of the six walls or a floor piece `|cZ + d| = 1` with canonical pair.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Hypersurface {
    /// `s1 = +1/2` (plus) or `s1 = -1/2`.
    Wall1 { plus: bool },
    /// `s2 = +1/2` or `s2 = -1/2`.
    Wall2 { plus: bool },
    /// `r = eps0^2` (plus) or `r = eps0^-2`.
    Wall3 { plus: bool },
    Floor(QuadInt, QuadInt),
}

impl Hypersurface {
    pub fn six_walls() -> Vec<Hypersurface> {
        vec![
            Hypersurface::Wall1 { plus: true },
            Hypersurface::Wall1 { plus: false },
            Hypersurface::Wall2 { plus: true },
            Hypersurface::Wall2 { plus: false },
            Hypersurface::Wall3 { plus: true },
            Hypersurface::Wall3 { plus: false },
        ]
    }

    pub fn label(&self) -> String {
        match self {
            Hypersurface::Wall1 { plus } => format!("V1{}", if *plus { "+" } else { "-" }),
            Hypersurface::Wall2 { plus } => format!("V2{}", if *plus { "+" } else { "-" }),
            Hypersurface::Wall3 { plus } => format!("V3{}", if *plus { "+" } else { "-" }),
            Hypersurface::Floor(c, d) => format!("V({c}; {d})"),
        }
    }
}

/// The finite set of coprime pairs bounding the domain from below. The
/// stored pairs are always canonical unit-orbit representatives, sorted
/// and deduplicated; build through [`FloorSet::new`] to keep it that way.
#[derive(Debug, Clone)]
pub struct FloorSet {
    pub pairs: Vec<(QuadInt, QuadInt)>,
}

impl FloorSet {
    /// Canonicalize, deduplicate and sort a list of pairs.
    pub fn new(ctx: &FieldCtx, raw: Vec<(QuadInt, QuadInt)>) -> Result<FloorSet> {
        let mut pairs = raw
            .into_iter()
            .map(|(c, d)| ctx.canonical_pair(&c, &d))
            .collect::<Result<Vec<_>>>()?;
        pairs.sort_by_key(pair_sort_key);
        pairs.dedup();
        Ok(FloorSet { pairs })
    }

    pub fn rows_f64(&self, ctx: &FieldCtx) -> FloorRows {
        FloorRows::new(ctx, &self.pairs)
    }

    pub fn rows_exact(&self, ctx: &FieldCtx) -> Vec<RowEmbed<KNum>> {
        self.pairs
            .iter()
            .map(|(c, d)| RowEmbed::from_pair(ctx, c, d))
            .collect()
    }

    pub fn to_json(&self, ctx: &FieldCtx) -> Value {
        let quad = |x: &QuadInt| json!([x.a.to_string(), x.b.to_string()]);
        json!({
            "k": ctx.k,
            "k0": ctx.k0,
            "eps0": quad(&ctx.eps0),
            "pairs": self.pairs.iter().map(|(c, d)| json!({"c": quad(c), "d": quad(d)})).collect::<Vec<_>>(),
        })
    }
}

/// Exact test of the enumeration bounds for one pair: `c != 0`, coprime,
/// `|N(c)| <= 2k/k0^2`, and both embedding bounds
/// `|d/c| < eps0 sqrt(T) + (1+w)/2`, `|d'/c'| < eps0 sqrt(T) + (1-w')/2`
/// with `T = 2k/(N(c)^2 k0^2) - k0^2/(2k)`.
pub fn satisfies_floor_conditions(ctx: &FieldCtx, c: &QuadInt, d: &QuadInt) -> bool {
    if c.is_zero() {
        return false;
    }
    if !ctx.is_coprime_pair(c, d) {
        return false;
    }
    let n_abs = c.norm().abs();
    let two_k = Int::from(2 * ctx.k);
    let k0sq = Int::from(ctx.k0 * ctx.k0);
    if &n_abs * &k0sq > two_k {
        return false;
    }
    let t_rat = floor_condition_t(ctx, &n_abs);
    let ratio = c.to_knum().inv() * d.to_knum();
    let half = Rat::new(Int::one(), Int::from(2));
    let one = KNum::from_rat(Rat::one());
    let extra1 = (one.clone() + ctx.omega_knum()) * KNum::from_rat(half.clone());
    let extra2 = (one - ctx.omega_conj_knum()) * KNum::from_rat(half);
    embedding_bound_holds(ctx, &ratio.abs(), &extra1, &t_rat)
        && embedding_bound_holds(ctx, &ratio.conj().abs(), &extra2, &t_rat)
}

/// `T = 2k/(n^2 k0^2) - k0^2/(2k)`, nonnegative when `n k0^2 <= 2k`.
fn floor_condition_t(ctx: &FieldCtx, n_abs: &Int) -> Rat {
    let k = Int::from(ctx.k);
    let k0sq = Int::from(ctx.k0 * ctx.k0);
    Rat::new(Int::from(2) * &k, n_abs * n_abs * &k0sq) - Rat::new(k0sq, Int::from(2) * k)
}

/// `value < eps0 sqrt(T) + extra`, decided exactly by squaring once the
/// rational part is moved across.
fn embedding_bound_holds(ctx: &FieldCtx, value: &KNum, extra: &KNum, t: &Rat) -> bool {
    let lhs = value.clone() - extra.clone();
    if lhs.sign() < 0 {
        return true;
    }
    let rhs = ctx.eps0_pow_knum(2) * KNum::from_rat(t.clone());
    lhs.clone() * lhs < rhs
}

/// Enumerate the canonical coprime pairs satisfying the floor conditions.
///
/// `c` runs over a lattice box that covers, for every admissible norm class,
/// at least one associate with balanced embeddings; it is then canonicalized
/// and deduplicated. For each canonical `c`, `d` runs over the lattice box
/// implied by the embedding bounds. Floats only size the boxes (with margin);
/// every accepted pair passes the exact test above.
pub fn enumerate_s1(ctx: &FieldCtx) -> Result<FloorSet> {
    let k = ctx.k as f64;
    let k0 = ctx.k0 as f64;
    let eps = ctx.eps0_knum().to_f64();
    let n_max = (2.0 * k / (k0 * k0)).floor();
    if n_max < 1.0 {
        return Err(Error::Pipeline("empty norm bound".into()));
    }
    let (w1, w2) = ctx.omega().to_f64_pair();

    // collect canonical c with 0 < |N(c)| <= n_max
    let b_c = (n_max * eps).sqrt() + 1.0;
    let mut cs: Vec<QuadInt> = Vec::new();
    let mut seen_c: std::collections::HashSet<QuadInt> = std::collections::HashSet::new();
    for (ca, cb) in lattice_box(w1, w2, b_c, b_c) {
        let c = QuadInt::from_i64(ca, cb, ctx.tag());
        if c.is_zero() {
            continue;
        }
        let n = c.norm().abs();
        if n.to_f64().unwrap_or(f64::INFINITY) > n_max + 0.5 {
            continue;
        }
        let (c_canon, _) = match ctx.canonical_pair(&c, &QuadInt::zero()) {
            Ok(v) => v,
            Err(_) => continue,
        };
        if seen_c.insert(c_canon.clone()) {
            cs.push(c_canon);
        }
    }

    let mut pairs: Vec<(QuadInt, QuadInt)> = Vec::new();
    for c in &cs {
        let n_abs = c.norm().abs();
        let t = floor_condition_t(ctx, &n_abs)
            .to_f64()
            .unwrap_or(0.0)
            .max(0.0);
        let root = eps * t.sqrt();
        let r1 = root + (1.0 + w1) / 2.0;
        let r2 = root + (1.0 - w2) / 2.0;
        let (c1, c2) = c.to_f64_pair();
        let d1_max = r1 * c1.abs() + 1.0;
        let d2_max = r2 * c2.abs() + 1.0;
        for (da, db) in lattice_box(w1, w2, d1_max, d2_max) {
            let d = QuadInt::from_i64(da, db, ctx.tag());
            if satisfies_floor_conditions(ctx, c, &d) {
                pairs.push((c.clone(), d.clone()));
            }
        }
    }
    pairs.sort_by_key(pair_sort_key);
    pairs.dedup();
    Ok(FloorSet { pairs })
}

/// Deterministic order: by |N(c)|, then lattice coordinates.
fn pair_sort_key(p: &(QuadInt, QuadInt)) -> (Int, Int, Int, Int, Int) {
    (
        p.0.norm().abs(),
        p.0.a.clone(),
        p.0.b.clone(),
        p.1.a.clone(),
        p.1.b.clone(),
    )
}

/// Integer points `(a, b)` with `|a + b w| <= bound1` and `|a + b w'| <= bound2`.
fn lattice_box(w1: f64, w2: f64, bound1: f64, bound2: f64) -> Vec<(i64, i64)> {
    let span = w1 - w2;
    let b_max = ((bound1 + bound2) / span + 1.0) as i64;
    let mut out = Vec::new();
    for b in -b_max..=b_max {
        let lo1 = -bound1 - b as f64 * w1;
        let hi1 = bound1 - b as f64 * w1;
        let lo2 = -bound2 - b as f64 * w2;
        let hi2 = bound2 - b as f64 * w2;
        let lo = lo1.max(lo2).floor() as i64 - 1;
        let hi = hi1.min(hi2).ceil() as i64 + 1;
        for a in lo..=hi {
            out.push((a, b));
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Membership
// ---------------------------------------------------------------------------

fn half() -> KNum {
    KNum::from_rat(Rat::new(Int::one(), Int::from(2)))
}

/// Closed membership in the box `|s1|, |s2| <= 1/2`, `eps0^-2 <= r <= eps0^2`,
/// via `r^2` so irrational coordinates stay in the field.
pub fn in_finf(ctx: &FieldCtx, p: &ExactPoint) -> bool {
    finf_margins(ctx, p).iter().all(|m| m.sign() >= 0)
}

pub fn in_finf_strict(ctx: &FieldCtx, p: &ExactPoint) -> bool {
    finf_margins(ctx, p).iter().all(|m| m.sign() > 0)
}

/// The six wall margins, nonnegative exactly on the box.
fn finf_margins(ctx: &FieldCtx, p: &ExactPoint) -> [KNum; 6] {
    let (s1, s2) = s_coords(ctx, p);
    let rsq = p.rsq();
    let h = half();
    [
        h.clone() - s1.clone(),
        s1 + h.clone(),
        h.clone() - s2.clone(),
        s2 + h,
        ctx.eps0_pow_knum(4) - rsq.clone(),
        rsq - ctx.eps0_pow_knum(-4),
    ]
}

/// Closed membership in the fundamental domain.
pub fn in_f(ctx: &FieldCtx, floors: &FloorSet, p: &ExactPoint) -> bool {
    in_finf(ctx, p)
        && floors
            .pairs
            .iter()
            .all(|(c, d)| norm_czd_pair(ctx, c, d, p) >= KNum::one())
}

/// Strict membership: the interior.
pub fn in_f_interior(ctx: &FieldCtx, floors: &FloorSet, p: &ExactPoint) -> bool {
    in_finf_strict(ctx, p)
        && floors
            .pairs
            .iter()
            .all(|(c, d)| norm_czd_pair(ctx, c, d, p) > KNum::one())
}

/// Float membership with slack, for seeding only.
pub fn in_f_float(ctx: &FieldCtx, rows: &FloorRows, p: &Point<f64>, tol: f64) -> bool {
    let (s1, s2) = s_coords(ctx, p);
    let eps = ctx.eps0_knum().to_f64();
    let r = (p.y1sq / p.y2sq).sqrt();
    s1.abs() <= 0.5 + tol
        && s2.abs() <= 0.5 + tol
        && r >= eps.powi(-2) - tol
        && r <= eps.powi(2) + tol
        && rows.rows.iter().all(|row| norm_czd(row, p) >= 1.0 - tol)
}

// ---------------------------------------------------------------------------
// Reduction
// ---------------------------------------------------------------------------

/// A generator applied during reduction, in product order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Step {
    P1(i64),
    P2(i64),
    P3(i64),
    /// Index into the floor set: the completion of that pair was applied.
    Floor(usize),
}

#[derive(Debug, Clone)]
pub struct ReduceOutcome {
    pub gamma: GroupElem,
    pub reduced: ExactPoint,
    /// `gamma` as a word in `P1, P2, P3, P_(c,d)`, leftmost factor first.
    pub word: Vec<Step>,
    /// `h^2` before and after each floor step, for monotonicity checks.
    pub floor_heights: Vec<(KNum, KNum)>,
    pub steps: usize,
}

/// Reduction engine with the per-field data precomputed.
pub struct Reducer<'a> {
    pub ctx: &'a FieldCtx,
    pub floors: &'a FloorSet,
    rows: Vec<RowEmbed<KNum>>,
    completions: Vec<GroupElem>,
    cap: usize,
}

impl<'a> Reducer<'a> {
    pub fn new(ctx: &'a FieldCtx, floors: &'a FloorSet) -> Result<Reducer<'a>> {
        let completions = floors
            .pairs
            .iter()
            .map(|(c, d)| ctx.complete_to_matrix(c, d))
            .collect::<Result<Vec<_>>>()?;
        Ok(Reducer {
            ctx,
            floors,
            rows: floors.rows_exact(ctx),
            completions,
            cap: 10_000,
        })
    }

    pub fn with_cap(mut self, cap: usize) -> Self {
        self.cap = cap;
        self
    }

    pub fn completion(&self, idx: usize) -> &GroupElem {
        &self.completions[idx]
    }

    /// Move `z` into the fundamental domain, returning the transformation,
    /// its generator word, and the exact height trace of the floor steps.
    pub fn reduce(&self, z: &ExactPoint) -> Result<ReduceOutcome> {
        let ctx = self.ctx;
        let mut cur = z.clone();
        let mut gamma = GroupElem::identity();
        let mut word: Vec<Step> = Vec::new();
        let mut floor_heights: Vec<(KNum, KNum)> = Vec::new();
        let mut steps = 0usize;
        loop {
            steps += 1;
            if steps > self.cap {
                return Err(Error::IterationCap(format!(
                    "reduction did not settle within {} rounds; floor heights: {:?}",
                    self.cap,
                    floor_heights
                        .iter()
                        .map(|(a, b)| (a.to_f64(), b.to_f64()))
                        .collect::<Vec<_>>()
                )));
            }
            // (i) normalize under the stabilizer of infinity
            let (t, m, b1, b2) = self.normalizer(&cur);
            if !t.is_identity() {
                cur = apply(ctx, &t, &cur);
                gamma = t.mul(&gamma);
                let mut expansion = Vec::new();
                if b1 != 0 {
                    expansion.push(Step::P1(b1));
                }
                if b2 != 0 {
                    expansion.push(Step::P2(b2));
                }
                if m != 0 {
                    expansion.push(Step::P3(m));
                }
                expansion.extend(word);
                word = expansion;
            }
            // (ii) find the strongest floor violation
            let mut best: Option<(usize, KNum)> = None;
            for (i, row) in self.rows.iter().enumerate() {
                let n = norm_czd(row, &cur);
                if n < KNum::one() {
                    best = match best {
                        Some((j, bn)) if bn <= n => Some((j, bn)),
                        _ => Some((i, n)),
                    };
                }
            }
            let Some((idx, _)) = best else {
                let reduced = apply(ctx, &gamma, z);
                debug_assert_eq!(reduced, cur);
                return Ok(ReduceOutcome {
                    gamma,
                    reduced,
                    word,
                    floor_heights,
                    steps,
                });
            };
            let g = &self.completions[idx];
            let before = cur.hsq();
            cur = apply(ctx, g, &cur);
            floor_heights.push((before, cur.hsq()));
            gamma = g.mul(&gamma);
            let mut expansion = vec![Step::Floor(idx)];
            expansion.extend(word);
            word = expansion;
        }
    }

    /// The upper-triangular element taking `cur` into the half-open box
    /// `r in (eps0^-2, eps0^2]`, `s in [-1/2, 1/2)^2`, plus its exponents.
    fn normalizer(&self, cur: &ExactPoint) -> (GroupElem, i64, i64, i64) {
        let ctx = self.ctx;
        // pick m with rsq * eps^{8m} in (eps^-4, eps^4]
        let rsq = cur.rsq();
        let mut m = match rsq.to_f64() {
            v if v.is_finite() && v > 0.0 => {
                (-(v.ln()) / (8.0 * ctx.eps0_knum().to_f64().ln())).round() as i64
            }
            _ => 0,
        };
        let lo = ctx.eps0_pow_knum(-4);
        let hi = ctx.eps0_pow_knum(4);
        loop {
            let scaled = ctx.eps0_pow_knum(8 * m) * rsq.clone();
            if scaled <= lo {
                m += 1;
            } else if scaled > hi {
                m -= 1;
            } else {
                break;
            }
        }
        let diag = ctx.upper(m, &QuadInt::zero());
        let moved = if m == 0 {
            cur.clone()
        } else {
            apply(ctx, &diag, cur)
        };
        // translate s into [-1/2, 1/2)
        let (s1, s2) = s_coords(ctx, &moved);
        let b1 = -(s1 + half()).floor_int();
        let b2 = -(s2 + half()).floor_int();
        let b1i = b1.to_i64().expect("translation fits i64");
        let b2i = b2.to_i64().expect("translation fits i64");
        let b = QuadInt::new(b1, b2, ctx.tag());
        let t = ctx.upper(0, &b).mul(&diag);
        (t, m, b1i, b2i)
    }
}

/// One-shot reduction.
pub fn reduce(
    ctx: &FieldCtx,
    floors: &FloorSet,
    z: &ExactPoint,
    cap: usize,
) -> Result<ReduceOutcome> {
    Reducer::new(ctx, floors)?.with_cap(cap).reduce(z)
}

// ---------------------------------------------------------------------------
// Certified floor witnesses
// ---------------------------------------------------------------------------

/// Rational approximation with the given denominator.
pub fn rationalize(x: f64, den: i64) -> Rat {
    Rat::new(Int::from((x * den as f64).round() as i64), Int::from(den))
}

/// Exact point on the floor piece of `(c, d)` over rational `(s1, s2)` with
/// chosen rational `y1^2`: `y2^2` is solved from `|cZ + d| = 1`, which is a
/// rational operation, so the surface equality holds by construction.
pub fn solve_floor_point(
    ctx: &FieldCtx,
    c: &QuadInt,
    d: &QuadInt,
    s1: &Rat,
    s2: &Rat,
    y1sq: &Rat,
) -> Option<ExactPoint> {
    if !y1sq.is_positive() {
        return None;
    }
    let row = RowEmbed::<KNum>::from_pair(ctx, c, d);
    let w = ctx.omega_knum();
    let wc = ctx.omega_conj_knum();
    let x1 = KNum::from_rat(s1.clone()) + KNum::from_rat(s2.clone()) * w;
    let x2 = KNum::from_rat(s1.clone()) + KNum::from_rat(s2.clone()) * wc;
    let y1 = KNum::from_rat(y1sq.clone());
    let e1 = row.c1.clone() * x1.clone() + row.d1.clone();
    let f1 = e1.clone() * e1 + row.c1.clone() * row.c1.clone() * y1.clone();
    if f1.sign() <= 0 {
        return None;
    }
    let e2 = row.c2.clone() * x2.clone() + row.d2.clone();
    let c2sq = row.c2.clone() * row.c2.clone();
    if c2sq.sign() == 0 {
        return None;
    }
    let y2 = (f1.inv() - e2.clone() * e2) / c2sq;
    if y2.sign() <= 0 {
        return None;
    }
    let p = Point::new(x1, x2, y1, y2);
    debug_assert_eq!(norm_czd(&row, &p), KNum::one());
    Some(p)
}

/// Report of the essential-hypersurface scan.
#[derive(Debug, Clone)]
pub struct EssentialReport {
    pub walls: Vec<Hypersurface>,
    /// Floors with an exact strict-interior witness on their surface.
    pub certified: Vec<(Hypersurface, ExactPoint)>,
    /// Floors the search could not certify; not excluded, just unresolved.
    pub undetermined: Vec<Hypersurface>,
}

/// The six walls plus every floor with a certified witness: an exact point
/// with `|cZ+d| = 1`, every other floor strictly above 1, and all box
/// constraints strict. Such a point pins local dimension 3.
pub fn essential_floors(ctx: &FieldCtx, floors: &FloorSet, grid_n: usize) -> EssentialReport {
    let mut certified = Vec::new();
    let mut undetermined = Vec::new();
    for idx in 0..floors.pairs.len() {
        let (c, d) = &floors.pairs[idx];
        match certify_floor(ctx, floors, idx, grid_n) {
            Some(p) => certified.push((Hypersurface::Floor(c.clone(), d.clone()), p)),
            None => undetermined.push(Hypersurface::Floor(c.clone(), d.clone())),
        }
    }
    EssentialReport {
        walls: Hypersurface::six_walls(),
        certified,
        undetermined,
    }
}

/// Check every wall margin strict and every floor except `skip` strictly
/// above 1; the `skip` floor must sit exactly at 1.
pub fn strict_interior_on_floor(
    ctx: &FieldCtx,
    floors: &FloorSet,
    skip: usize,
    p: &ExactPoint,
) -> bool {
    if !in_finf_strict(ctx, p) {
        return false;
    }
    for (j, (c, d)) in floors.pairs.iter().enumerate() {
        let n = norm_czd_pair(ctx, c, d, p);
        if j == skip {
            if n != KNum::one() {
                return false;
            }
        } else if n <= KNum::one() {
            return false;
        }
    }
    true
}

fn certify_floor(
    ctx: &FieldCtx,
    floors: &FloorSet,
    idx: usize,
    grid_n: usize,
) -> Option<ExactPoint> {
    let seeds = floor_witness_seeds(ctx, floors, idx, grid_n, 4);
    for (s1, s2, r, h) in seeds {
        for den in [32i64, 128, 1024, 8192, 65536] {
            let s1r = rationalize(s1, den);
            let s2r = rationalize(s2, den);
            let y1r = rationalize(r * h, den * den);
            let (c, d) = &floors.pairs[idx];
            if let Some(p) = solve_floor_point(ctx, c, d, &s1r, &s2r, &y1r) {
                if strict_interior_on_floor(ctx, floors, idx, &p) {
                    return Some(p);
                }
            }
        }
    }
    None
}

/// Grid scan over the box: points where floor `idx` is the strict maximum of
/// the root heights with the best margins, as float seeds `(s1, s2, r, h)`.
pub fn floor_witness_seeds(
    ctx: &FieldCtx,
    floors: &FloorSet,
    idx: usize,
    grid_n: usize,
    keep: usize,
) -> Vec<(f64, f64, f64, f64)> {
    let rows = floors.rows_f64(ctx);
    let eps = ctx.eps0_knum().to_f64();
    let mut scored: Vec<(f64, (f64, f64, f64, f64))> = Vec::new();
    for i in 0..grid_n {
        let s1 = -0.5 + (i as f64 + 0.5) / grid_n as f64;
        for j in 0..grid_n {
            let s2 = -0.5 + (j as f64 + 0.5) / grid_n as f64;
            for l in 0..grid_n {
                let r =
                    eps.powi(-2) + (eps.powi(2) - eps.powi(-2)) * (l as f64 + 0.5) / grid_n as f64;
                let (x1, x2) = crate::geometry::sr_to_x(ctx, s1, s2);
                let Some(h) = h1_row(&rows.rows[idx], x1, x2, r) else {
                    continue;
                };
                let mut other = 0.0f64;
                for (jrow, row) in rows.rows.iter().enumerate() {
                    if jrow == idx {
                        continue;
                    }
                    if let Some(v) = h1_row(row, x1, x2, r) {
                        other = other.max(v);
                    }
                }
                let wall_margin = (0.5 - s1.abs())
                    .min(0.5 - s2.abs())
                    .min(r - eps.powi(-2))
                    .min(eps.powi(2) - r);
                let margin = (h - other).min(wall_margin);
                if margin > 0.0 {
                    scored.push((margin, (s1, s2, r, h)));
                }
            }
        }
    }
    scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal));
    scored.into_iter().take(keep).map(|(_, s)| s).collect()
}

/// Floor height at box coordinates, float lane.
pub fn floor_height(ctx: &FieldCtx, floors: &FloorSet, s1: f64, s2: f64, r: f64) -> f64 {
    h0_rows(ctx, &floors.rows_f64(ctx), s1, s2, r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::SRPoint;
    use num_traits::{One, Zero};

    fn ctx(k: i64) -> FieldCtx {
        FieldCtx::new_pid(k).unwrap()
    }

    fn rat(n: i64, d: i64) -> Rat {
        Rat::new(n.into(), d.into())
    }

    #[test]
    fn s1_for_k5_has_only_unit_c() {
        let c5 = ctx(5);
        let s1 = enumerate_s1(&c5).unwrap();
        assert!(!s1.pairs.is_empty());
        for (c, _) in &s1.pairs {
            assert!(c.norm().abs().is_one(), "c = {c} has norm {}", c.norm());
            assert!(c.is_one(), "canonical unit c should be 1, got {c}");
        }
        assert!(s1.pairs.iter().any(|(c, d)| c.is_one() && d.is_zero()));
    }

    #[test]
    fn no_norm_two_elements_for_k5() {
        // |a^2 + ab - b^2| = 2 has no small solutions
        let c5 = ctx(5);
        for a in -30i64..=30 {
            for b in -30i64..=30 {
                let q = QuadInt::from_i64(a, b, c5.tag());
                assert_ne!(q.norm().abs(), Int::from(2));
            }
        }
    }

    #[test]
    fn s1_for_k2_norm_classes() {
        let c2 = ctx(2);
        let s1 = enumerate_s1(&c2).unwrap();
        assert!(!s1.pairs.is_empty());
        let mut norms: Vec<i64> = s1
            .pairs
            .iter()
            .map(|(c, _)| c.norm().abs().to_i64().unwrap())
            .collect();
        norms.sort();
        norms.dedup();
        assert!(norms.contains(&1));
        assert!(norms.contains(&2));
        for n in &norms {
            assert!(*n <= 4, "norm {n} exceeds 2k/k0^2 = 4");
        }
        for (c, d) in &s1.pairs {
            assert!(satisfies_floor_conditions(&c2, c, d));
            assert!(c2.is_canonical_pair(c, d));
        }
    }

    #[test]
    fn enumeration_is_stable_under_unit_scaling() {
        let c5 = ctx(5);
        let s1 = enumerate_s1(&c5).unwrap();
        for (c, d) in s1.pairs.iter().take(8) {
            for m in [-2i64, -1, 1, 2] {
                let u = c5.eps0_pow(m);
                let canon = c5.canonical_pair(&(&u * c), &(&u * d)).unwrap();
                assert!(s1.pairs.contains(&canon));
            }
        }
    }

    #[test]
    fn finf_membership_examples() {
        let c5 = ctx(5);
        let inside = SRPoint::from_i64(0, 0, 1, 2).to_point::<KNum>(&c5);
        assert!(in_finf(&c5, &inside));
        let outside = SRPoint::new(rat(3, 5), Rat::zero(), Rat::one(), rat(2, 1))
            .unwrap()
            .to_point::<KNum>(&c5);
        assert!(!in_finf(&c5, &outside));
        // boundary point with r = eps0^2 exactly, built in K
        let p = Point::new(
            KNum::zero(),
            KNum::zero(),
            c5.eps0_pow_knum(2),
            c5.eps0_pow_knum(-2),
        );
        assert_eq!(p.rsq(), c5.eps0_pow_knum(4));
        assert!(in_finf(&c5, &p));
        assert!(!in_finf_strict(&c5, &p));
    }

    #[test]
    fn in_f_examples() {
        let c5 = ctx(5);
        let s1 = enumerate_s1(&c5).unwrap();
        let z = SRPoint::from_i64(0, 0, 1, 2).to_point::<KNum>(&c5);
        assert!(in_f(&c5, &s1, &z));
        // h = k0^2/(2k) = 2/5 is below the floor
        let low = SRPoint::new(Rat::zero(), Rat::zero(), Rat::one(), rat(2, 5))
            .unwrap()
            .to_point::<KNum>(&c5);
        assert!(!in_f(&c5, &s1, &low));
        // interiors of distinct tiles are disjoint
        let interior = SRPoint::new(rat(1, 10), rat(-1, 10), Rat::one(), rat(3, 2))
            .unwrap()
            .to_point::<KNum>(&c5);
        assert!(in_f_interior(&c5, &s1, &interior));
        let moved = apply(&c5, &c5.p1(), &interior);
        assert!(!in_f_interior(&c5, &s1, &moved));
    }

    #[test]
    fn reduce_examples() {
        let c5 = ctx(5);
        let s1 = enumerate_s1(&c5).unwrap();
        let reducer = Reducer::new(&c5, &s1).unwrap();
        let z0 = SRPoint::from_i64(0, 0, 1, 2).to_point::<KNum>(&c5);
        let out = reducer.reduce(&z0).unwrap();
        assert!(out.gamma.is_identity());
        assert_eq!(out.reduced, z0);
        assert!(out.word.is_empty());

        let moved = apply(&c5, &c5.p1(), &z0);
        let out = reducer.reduce(&moved).unwrap();
        assert_eq!(out.gamma, c5.p1().inv());
        assert_eq!(out.reduced, z0);

        let w = c5.p3().mul(&c5.p2()).mul(&c5.p1().inv()).mul(&c5.p3());
        let out = reducer.reduce(&apply(&c5, &w, &z0)).unwrap();
        assert_eq!(out.reduced, z0);
        assert_eq!(out.gamma, w.inv());
        for (before, after) in &out.floor_heights {
            assert!(after > before, "floor steps must increase height");
        }
    }

    #[test]
    fn interior_orbits_leave_the_interior() {
        use rand::{Rng, SeedableRng};
        let c5 = ctx(5);
        let s1 = enumerate_s1(&c5).unwrap();
        let reducer = Reducer::new(&c5, &s1).unwrap();
        let gens = [
            c5.p1(),
            c5.p2(),
            c5.p3(),
            reducer.completion(0).clone(),
        ];
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        let interior: Vec<ExactPoint> = [
            (rat(1, 10), rat(-1, 10), rat(1, 1), rat(3, 2)),
            (rat(-1, 7), rat(1, 5), rat(6, 5), rat(5, 4)),
        ]
        .into_iter()
        .map(|(a, b, r, h)| {
            SRPoint::new(a, b, r, h).unwrap().to_point::<KNum>(&c5)
        })
        .collect();
        for z in &interior {
            assert!(in_f_interior(&c5, &s1, z));
        }
        for _ in 0..50 {
            let mut g = GroupElem::identity();
            let len = rng.gen_range(1..=6);
            for _ in 0..len {
                let i = rng.gen_range(0..gens.len());
                let f = if rng.gen_bool(0.5) { gens[i].inv() } else { gens[i].clone() };
                g = g.mul(&f);
            }
            if g.is_identity() {
                continue;
            }
            for z in &interior {
                assert!(
                    !in_f_interior(&c5, &s1, &apply(&c5, &g, z)),
                    "nontrivial {g} keeps an interior point in the interior"
                );
            }
        }
    }

    #[test]
    fn reduce_lands_arbitrary_points_in_f() {
        use rand::{Rng, SeedableRng};
        let c2 = ctx(2);
        let s1 = enumerate_s1(&c2).unwrap();
        let reducer = Reducer::new(&c2, &s1).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let z = SRPoint::new(
                rat(rng.gen_range(-40..40), 7),
                rat(rng.gen_range(-40..40), 9),
                rat(rng.gen_range(1..60), 8),
                rat(rng.gen_range(1..60), 5),
            )
            .unwrap()
            .to_point::<KNum>(&c2);
            let out = reducer.reduce(&z).unwrap();
            assert!(in_f(&c2, &s1, &out.reduced));
            assert_eq!(out.reduced, apply(&c2, &out.gamma, &z));
            for (before, after) in &out.floor_heights {
                assert!(after > before);
            }
        }
    }

    #[test]
    fn reduce_word_multiplies_to_gamma() {
        let c2 = ctx(2);
        let s1 = enumerate_s1(&c2).unwrap();
        let reducer = Reducer::new(&c2, &s1).unwrap();
        let z0 = SRPoint::from_i64(0, 0, 1, 2).to_point::<KNum>(&c2);
        let g = c2
            .complete_to_matrix(&QuadInt::from_i64(-1, 1, c2.tag()), &QuadInt::one())
            .unwrap();
        let w = g.mul(&c2.p1()).mul(&c2.p3());
        let out = reducer.reduce(&apply(&c2, &w, &z0)).unwrap();
        let mut prod = GroupElem::identity();
        for step in &out.word {
            let factor = match step {
                Step::P1(e) => pow_signed(&c2.p1(), *e),
                Step::P2(e) => pow_signed(&c2.p2(), *e),
                Step::P3(e) => pow_signed(&c2.p3(), *e),
                Step::Floor(i) => reducer.completion(*i).clone(),
            };
            prod = prod.mul(&factor);
        }
        assert_eq!(prod, out.gamma);
        assert_eq!(out.reduced, z0);
    }

    fn pow_signed(g: &GroupElem, e: i64) -> GroupElem {
        let base = if e < 0 { g.inv() } else { g.clone() };
        base.pow(e.unsigned_abs() as u32)
    }

    #[test]
    fn floor_one_zero_is_certified_for_k5() {
        let c5 = ctx(5);
        let s1 = enumerate_s1(&c5).unwrap();
        let report = essential_floors(&c5, &s1, 9);
        assert_eq!(report.walls.len(), 6);
        let target = Hypersurface::Floor(QuadInt::one(), QuadInt::zero());
        assert!(
            report.certified.iter().any(|(h, _)| h == &target),
            "floor (1, 0) should carry a certified witness; undetermined: {:?}",
            report
                .undetermined
                .iter()
                .map(|h| h.label())
                .collect::<Vec<_>>()
        );
        for (h, p) in &report.certified {
            let Hypersurface::Floor(c, d) = h else { panic!() };
            let idx = s1
                .pairs
                .iter()
                .position(|(cc, dd)| cc == c && dd == d)
                .unwrap();
            assert!(strict_interior_on_floor(&c5, &s1, idx, p));
        }
    }

    #[test]
    fn floor_height_bounds_on_a_coarse_grid() {
        for k in [2i64, 5] {
            let c = ctx(k);
            let s1 = enumerate_s1(&c).unwrap();
            let eps = c.eps0_knum().to_f64();
            let lower = (c.k0 * c.k0) as f64 / (2.0 * c.k as f64);
            let n = 9;
            for i in 0..n {
                let s1v = -0.5 + (i as f64 + 0.5) / n as f64;
                for j in 0..n {
                    let s2v = -0.5 + (j as f64 + 0.5) / n as f64;
                    for l in 0..n {
                        let r = eps.powi(-2)
                            + (eps.powi(2) - eps.powi(-2)) * (l as f64 + 0.5) / n as f64;
                        let h0v = floor_height(&c, &s1, s1v, s2v, r);
                        assert!(h0v <= 1.0 + 1e-12, "k={k}: h0 = {h0v} > 1");
                        assert!(h0v > lower, "k={k}: h0 = {h0v} <= {lower}");
                    }
                }
            }
        }
    }

    #[test]
    fn floorset_json_shape() {
        let c5 = ctx(5);
        let s1 = enumerate_s1(&c5).unwrap();
        let v = s1.to_json(&c5);
        assert_eq!(v["k"], 5);
        assert_eq!(v["k0"], 2);
        assert_eq!(v["eps0"][0], "0");
        assert_eq!(v["eps0"][1], "1");
        assert!(v["pairs"].as_array().unwrap().len() == s1.pairs.len());
    }
}
