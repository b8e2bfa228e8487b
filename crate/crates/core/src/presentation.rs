//! Sides of the fundamental domain, their pairing transformations, edges,
//! edge cycles, and the resulting finite presentation.
//!
//! A side is `F n gamma^-1(F)` of dimension 3; it lives on exactly one wall
//! or floor hypersurface. Candidates are proposed by normalizing float
//! samples of the boundary under the stabilizer of infinity, then each is
//! certified by an exact witness: a point of the field that sits exactly on
//! the side's hypersurface, strictly inside every other constraint of `F`,
//! and whose image under the pairing does the same on the paired surface.
//! Edges are located numerically (damped Gauss-Newton); everything the
//! presentation asserts about the group is then re-verified exactly.

use std::collections::{HashMap, HashSet};

use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::domain::{
    enumerate_s1, in_f_float, rationalize, solve_floor_point, FloorSet, Hypersurface, Reducer,
    Step,
};
use crate::geometry::{
    apply, h0_rows, h1_row, norm_czd, norm_czd_pair, s_coords, sr_to_x, FloorRows, Point,
    SRPoint,
};
use crate::ring::{FieldCtx, GroupElem, Int, KNum, QuadInt, Rat};
use crate::{Error, ExactPoint, Result};

/// Tunables for the side/edge/cycle machinery.
#[derive(Debug, Clone)]
pub struct RunParams {
    pub newton_tol: f64,
    pub cluster_tol: f64,
    /// Witness clusters farther apart than this count as separate components.
    pub component_radius: f64,
    /// A point is "on" a side surface within this tolerance.
    pub on_tol: f64,
    /// Other sides must miss an edge witness by more than this.
    pub off_tol: f64,
    pub side_grid: usize,
    pub wall_h_levels: usize,
    pub q_max: i64,
    pub m_max: i64,
    pub b_max: i64,
    pub order_cap: u32,
    pub reduce_cap: usize,
    pub coverage_samples: usize,
    pub seed: u64,
    /// Rounds of cap growth when the coverage certificate fails.
    pub growth_rounds: usize,
}

impl Default for RunParams {
    fn default() -> Self {
        RunParams {
            newton_tol: 1e-10,
            cluster_tol: 1e-6,
            component_radius: 0.05,
            on_tol: 1e-7,
            off_tol: 1e-4,
            side_grid: 15,
            wall_h_levels: 6,
            q_max: 3,
            m_max: 3,
            b_max: 3,
            order_cap: 60,
            reduce_cap: 10_000,
            coverage_samples: 2000,
            seed: 7,
            growth_rounds: 3,
        }
    }
}

/// A side `F n gamma^-1(F)` with its certified witness.
#[derive(Debug, Clone)]
pub struct Side {
    pub id: usize,
    pub gamma: GroupElem,
    pub surface: Hypersurface,
    pub witness: ExactPoint,
    /// Id of the paired side (the side of `gamma^-1`); may equal `id`.
    pub star: usize,
}

#[derive(Debug, Clone)]
pub struct SideSet {
    pub sides: Vec<Side>,
    by_gamma: HashMap<GroupElem, usize>,
}

impl SideSet {
    pub fn find(&self, g: &GroupElem) -> Option<usize> {
        self.by_gamma.get(g).copied()
    }

    pub fn len(&self) -> usize {
        self.sides.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sides.is_empty()
    }
}

/// An edge: a codimension-2 cell, identified by the unordered pair of sides
/// containing it, with a numeric witness in its relative interior.
#[derive(Debug, Clone)]
pub struct Edge {
    pub id: usize,
    pub sides: (usize, usize),
    pub witness: Point<f64>,
    pub tolerance: f64,
    /// Number of well-separated witness components found for this side pair;
    /// more than one is flagged (possible disconnected edge).
    pub components: usize,
}

/// A cycle `(E_1, S_1, ..., E_n, S_n)` with its composite and exact order.
#[derive(Debug, Clone)]
pub struct Cycle {
    pub entries: Vec<(usize, usize)>,
    pub composite: GroupElem,
    pub order: u32,
}

/// The verified presentation.
#[derive(Debug, Clone)]
pub struct Presentation {
    pub k: i64,
    pub floors: FloorSet,
    pub sides: SideSet,
    pub edges: Vec<Edge>,
    pub cycles: Vec<Cycle>,
    /// Pairs `(s, s*)` with `gamma_s gamma_{s*} = 1`, one per unordered pair.
    pub pairing_relations: Vec<(usize, usize)>,
    /// `(side ids of gamma_{S_n} ... gamma_{S_1}, order m)`.
    pub cycle_relations: Vec<(Vec<usize>, u32)>,
    pub coverage: CoverageReport,
    pub warnings: Vec<String>,
}

// ---------------------------------------------------------------------------
// Surface classification
// ---------------------------------------------------------------------------

/// The hypersurface containing `F n gamma^-1(F)`, by the shape of `gamma`:
/// a floor for `c != 0`, otherwise one of the six walls read off the unit
/// `a` and the translation `b`.
pub fn classify_surface(ctx: &FieldCtx, g: &GroupElem) -> Result<Hypersurface> {
    if g.is_identity() {
        return Err(Error::Pipeline("identity bounds no side".into()));
    }
    if !g.c.is_zero() {
        let (c, d) = ctx.canonical_pair(&g.c, &g.d)?;
        return Ok(Hypersurface::Floor(c, d));
    }
    // representative with a > 0 in the first embedding
    let (a, b) = if g.a.to_knum().sign() < 0 {
        (-&g.a, -&g.b)
    } else {
        (g.a.clone(), g.b.clone())
    };
    if !a.is_one() {
        let below_one = a.to_knum() < KNum::one();
        return Ok(Hypersurface::Wall3 { plus: below_one });
    }
    if !b.a.is_zero() {
        return Ok(Hypersurface::Wall1 {
            plus: b.a.is_negative(),
        });
    }
    if !b.b.is_zero() {
        return Ok(Hypersurface::Wall2 {
            plus: b.b.is_negative(),
        });
    }
    Err(Error::Pipeline("identity bounds no side".into()))
}

/// Exact: does `p` lie on the hypersurface?
pub fn on_surface(ctx: &FieldCtx, surface: &Hypersurface, p: &ExactPoint) -> bool {
    let half = KNum::from_rat(Rat::new(Int::one(), Int::from(2)));
    match surface {
        Hypersurface::Wall1 { plus } => {
            let (s1, _) = s_coords(ctx, p);
            let target = if *plus { half } else { -half };
            s1 == target
        }
        Hypersurface::Wall2 { plus } => {
            let (_, s2) = s_coords(ctx, p);
            let target = if *plus { half } else { -half };
            s2 == target
        }
        Hypersurface::Wall3 { plus } => {
            let e = if *plus { 4 } else { -4 };
            p.rsq() == ctx.eps0_pow_knum(e)
        }
        Hypersurface::Floor(c, d) => norm_czd_pair(ctx, c, d, p) == KNum::one(),
    }
}

/// Signed float residual of the surface equation, zero on the surface.
pub fn surface_residual(ctx: &FieldCtx, surface: &Hypersurface, p: &Point<f64>) -> f64 {
    match surface {
        Hypersurface::Wall1 { plus } => {
            let (s1, _) = s_coords(ctx, p);
            s1 - if *plus { 0.5 } else { -0.5 }
        }
        Hypersurface::Wall2 { plus } => {
            let (_, s2) = s_coords(ctx, p);
            s2 - if *plus { 0.5 } else { -0.5 }
        }
        Hypersurface::Wall3 { plus } => {
            let eps = ctx.eps0_knum().to_f64();
            let r = (p.y1sq / p.y2sq).sqrt();
            r - eps.powi(if *plus { 2 } else { -2 })
        }
        Hypersurface::Floor(c, d) => norm_czd_pair(ctx, c, d, p) - 1.0,
    }
}

/// Exact strict-interior test relative to one hypersurface: `p` sits exactly
/// on `surface`, strictly inside every other wall, and strictly above every
/// other floor of the catalog.
pub fn on_surface_in_f_strict(
    ctx: &FieldCtx,
    floors: &FloorSet,
    surface: &Hypersurface,
    p: &ExactPoint,
) -> bool {
    if !on_surface(ctx, surface, p) {
        return false;
    }
    let (s1, s2) = s_coords(ctx, p);
    let rsq = p.rsq();
    let half = KNum::from_rat(Rat::new(Int::one(), Int::from(2)));
    let walls: [(Hypersurface, KNum); 6] = [
        (Hypersurface::Wall1 { plus: true }, half.clone() - s1.clone()),
        (Hypersurface::Wall1 { plus: false }, s1 + half.clone()),
        (Hypersurface::Wall2 { plus: true }, half.clone() - s2.clone()),
        (Hypersurface::Wall2 { plus: false }, s2 + half),
        (
            Hypersurface::Wall3 { plus: true },
            ctx.eps0_pow_knum(4) - rsq.clone(),
        ),
        (
            Hypersurface::Wall3 { plus: false },
            rsq - ctx.eps0_pow_knum(-4),
        ),
    ];
    for (wall, margin) in walls {
        let s = margin.sign();
        if &wall == surface {
            if s != 0 {
                return false;
            }
        } else if s <= 0 {
            return false;
        }
    }
    for (c, d) in &floors.pairs {
        let fl = Hypersurface::Floor(c.clone(), d.clone());
        let n = norm_czd_pair(ctx, c, d, p);
        if &fl == surface {
            if n != KNum::one() {
                return false;
            }
        } else if n <= KNum::one() {
            return false;
        }
    }
    true
}

/// Exact certificate that `gamma` pairs a dimension-3 side: a witness on
/// `V_gamma` strictly interior to all other constraints, whose image does
/// the same on `V_{gamma^-1}`.
pub fn certify_side_witness(
    ctx: &FieldCtx,
    floors: &FloorSet,
    gamma: &GroupElem,
    w: &ExactPoint,
) -> Result<bool> {
    let surface = classify_surface(ctx, gamma)?;
    if !on_surface_in_f_strict(ctx, floors, &surface, w) {
        return Ok(false);
    }
    let image = apply(ctx, gamma, w);
    let inv_surface = classify_surface(ctx, &gamma.inv())?;
    Ok(on_surface_in_f_strict(ctx, floors, &inv_surface, &image))
}

// ---------------------------------------------------------------------------
// Side discovery
// ---------------------------------------------------------------------------

struct Discovery<'a> {
    ctx: &'a FieldCtx,
    floors: &'a FloorSet,
    rows: FloorRows,
    completions: Vec<GroupElem>,
    eps: f64,
}

impl<'a> Discovery<'a> {
    fn new(ctx: &'a FieldCtx, floors: &'a FloorSet) -> Result<Discovery<'a>> {
        let completions = floors
            .pairs
            .iter()
            .map(|(c, d)| ctx.complete_to_matrix(c, d))
            .collect::<Result<Vec<_>>>()?;
        Ok(Discovery {
            ctx,
            floors,
            rows: floors.rows_f64(ctx),
            completions,
            eps: ctx.eps0_knum().to_f64(),
        })
    }

    /// Stabilizer elements `t` with `t(p)` in the box, float proposal with
    /// near-tie branching.
    fn normalizers(&self, p: &Point<f64>) -> Vec<(i64, i64, i64)> {
        let ctx = self.ctx;
        let r = (p.y1sq / p.y2sq).sqrt();
        let le = self.eps.ln();
        let m0 = (-(r.ln()) / (4.0 * le)).round() as i64;
        let mut out = Vec::new();
        for m in [m0 - 1, m0, m0 + 1] {
            let rm = r * self.eps.powi(4 * m as i32);
            if rm < self.eps.powi(-2) - 1e-9 || rm > self.eps.powi(2) + 1e-9 {
                continue;
            }
            let diag = ctx.upper(m, &QuadInt::zero());
            let moved = apply(ctx, &diag, p);
            let (s1, s2) = s_coords(ctx, &moved);
            for (b1, b2) in branch_translations(s1, s2) {
                out.push((m, b1, b2));
            }
        }
        out
    }

    /// Raw side candidates from one boundary sample on `surface`.
    fn propose(&self, surface: &Hypersurface, p: &Point<f64>) -> Vec<GroupElem> {
        let ctx = self.ctx;
        let base = match surface {
            Hypersurface::Wall1 { plus } => {
                return vec![if *plus { ctx.p1().inv() } else { ctx.p1() }];
            }
            Hypersurface::Wall2 { plus } => {
                return vec![if *plus { ctx.p2().inv() } else { ctx.p2() }];
            }
            Hypersurface::Wall3 { plus } => {
                if *plus {
                    ctx.p3().inv()
                } else {
                    ctx.p3()
                }
            }
            Hypersurface::Floor(c, d) => {
                let idx = self
                    .floors
                    .pairs
                    .iter()
                    .position(|(cc, dd)| cc == c && dd == d);
                match idx {
                    Some(i) => self.completions[i].clone(),
                    None => return Vec::new(),
                }
            }
        };
        let image = apply(ctx, &base, p);
        self.normalizers(&image)
            .into_iter()
            .map(|(m, b1, b2)| {
                let b = QuadInt::from_i64(b1, b2, ctx.tag());
                // translate after scaling: t = [[1, b], [0, 1]] * diag(eps^m, eps^-m)
                ctx.upper(0, &b)
                    .mul(&ctx.upper(m, &QuadInt::zero()))
                    .mul(&base)
            })
            .collect()
    }

    /// Boundary samples on every wall and floor patch of a regular grid,
    /// geometric along the ratio axis.
    fn boundary_samples(&self, grid: usize, h_levels: usize) -> Vec<(Hypersurface, Point<f64>)> {
        let ctx = self.ctx;
        let eps = self.eps;
        let mut out = Vec::new();
        let steps: Vec<f64> = (0..grid).map(|i| -0.5 + (i as f64 + 0.5) / grid as f64).collect();
        let rs: Vec<f64> = (0..grid)
            .map(|i| eps.powi(-2) * eps.powf(4.0 * (i as f64 + 0.5) / grid as f64))
            .collect();
        // floor graph points
        for &s1 in &steps {
            for &s2 in &steps {
                for &r in &rs {
                    let (x1, x2) = sr_to_x(ctx, s1, s2);
                    let mut best: Option<(usize, f64)> = None;
                    for (i, row) in self.rows.rows.iter().enumerate() {
                        if let Some(h) = h1_row(row, x1, x2, r) {
                            if best.is_none_or(|(_, bh)| h > bh) {
                                best = Some((i, h));
                            }
                        }
                    }
                    if let Some((idx, h)) = best {
                        let (c, d) = &self.floors.pairs[idx];
                        out.push((
                            Hypersurface::Floor(c.clone(), d.clone()),
                            float_point(ctx, s1, s2, r, h),
                        ));
                    }
                }
            }
        }
        // wall 3 (and by symmetry wall 3-) at heights above the floor
        for &s1 in &steps {
            for &s2 in &steps {
                for plus in [true, false] {
                    let r = if plus { eps.powi(2) } else { eps.powi(-2) };
                    let h0v = h0_rows(ctx, &self.rows, s1, s2, r);
                    for l in 0..h_levels {
                        let h = h0v + 0.05 + (l as f64) * (1.3 - h0v).max(0.2) / h_levels as f64;
                        out.push((Hypersurface::Wall3 { plus }, float_point(ctx, s1, s2, r, h)));
                    }
                }
            }
        }
        // walls 1 and 2
        for &s in &steps {
            for &r in &rs {
                for plus in [true, false] {
                    let sv = if plus { 0.5 } else { -0.5 };
                    let h1v = h0_rows(ctx, &self.rows, sv, s, r) + 0.3;
                    out.push((Hypersurface::Wall1 { plus }, float_point(ctx, sv, s, r, h1v)));
                    let h2v = h0_rows(ctx, &self.rows, s, sv, r) + 0.3;
                    out.push((Hypersurface::Wall2 { plus }, float_point(ctx, s, sv, r, h2v)));
                }
            }
        }
        out
    }
}

fn branch_translations(s1: f64, s2: f64) -> Vec<(i64, i64)> {
    let near = |s: f64| {
        let b = -(s + 0.5).floor();
        let mut v = vec![b as i64];
        let frac = s + 0.5 - (s + 0.5).floor();
        if frac < 1e-7 {
            v.push(b as i64 - 1);
        }
        if frac > 1.0 - 1e-7 {
            v.push(b as i64 + 1);
        }
        v
    };
    let mut out = Vec::new();
    for b1 in near(s1) {
        for b2 in near(s2) {
            out.push((b1, b2));
        }
    }
    out
}

fn float_point(ctx: &FieldCtx, s1: f64, s2: f64, r: f64, h: f64) -> Point<f64> {
    let (x1, x2) = sr_to_x(ctx, s1, s2);
    Point::new(x1, x2, r * h, h / r)
}

/// Exponents `(m, b1, b2)` of an upper-triangular `g * base^-1` written as
/// `P1^b1 P2^b2 P3^m`, up to the global sign. Used to validate candidates
/// against the configured caps, where only the magnitudes matter.
fn stabilizer_exponents(
    ctx: &FieldCtx,
    g: &GroupElem,
    base: &GroupElem,
) -> Option<(i64, i64, i64)> {
    let t = g.mul(&base.inv());
    if !t.c.is_zero() {
        return None;
    }
    let (_, m) = ctx.unit_log(&t.a).ok()?;
    let shift = t.mul(&ctx.upper(m, &QuadInt::zero()).inv());
    let b1 = shift.b.a.to_i64()?;
    let b2 = shift.b.b.to_i64()?;
    Some((m, b1, b2))
}

/// Find, certify and pair the sides of the fundamental domain.
pub fn find_sides(ctx: &FieldCtx, floors: &FloorSet, params: &RunParams) -> Result<SideSet> {
    find_sides_inner(ctx, floors, params, &[], &mut Vec::new())
}

/// As `find_sides`, with additional boundary samples driving discovery.
pub fn find_sides_with_extra(
    ctx: &FieldCtx,
    floors: &FloorSet,
    params: &RunParams,
    extra: &[(Hypersurface, Point<f64>)],
) -> Result<SideSet> {
    find_sides_inner(ctx, floors, params, extra, &mut Vec::new())
}

fn find_sides_inner(
    ctx: &FieldCtx,
    floors: &FloorSet,
    params: &RunParams,
    extra_samples: &[(Hypersurface, Point<f64>)],
    warnings: &mut Vec<String>,
) -> Result<SideSet> {
    let disc = Discovery::new(ctx, floors)?;
    let mut samples = disc.boundary_samples(params.side_grid, params.wall_h_levels);
    samples.extend_from_slice(extra_samples);
    let mut candidates: Vec<GroupElem> = Vec::new();
    let mut seen: HashSet<GroupElem> = HashSet::new();
    let mut sample_of: HashMap<GroupElem, Vec<Point<f64>>> = HashMap::new();
    for (surface, p) in &samples {
        for g in disc.propose(surface, p) {
            if g.is_identity() {
                continue;
            }
            if seen.insert(g.clone()) {
                candidates.push(g.clone());
            }
            let proposers = sample_of.entry(g).or_default();
            if proposers.len() < 64 {
                proposers.push(p.clone());
            }
        }
    }

    // cap validation (the caps are diagnostics: discovery already sized t)
    candidates.retain(|g| {
        let base = match classify_surface(ctx, g) {
            Ok(Hypersurface::Floor(c, d)) => match ctx.complete_to_matrix(&c, &d) {
                Ok(b) => b,
                Err(_) => return false,
            },
            Ok(Hypersurface::Wall3 { plus }) => {
                if plus {
                    ctx.p3().inv()
                } else {
                    ctx.p3()
                }
            }
            Ok(_) => GroupElem::identity(),
            Err(_) => return false,
        };
        match stabilizer_exponents(ctx, g, &base) {
            Some((m, b1, b2)) => {
                let ok = m.abs() <= params.m_max
                    && b1.abs() <= params.b_max.max(params.q_max)
                    && b2.abs() <= params.b_max.max(params.q_max);
                if !ok {
                    warnings.push(format!(
                        "candidate {g} exceeds stabilizer caps (m={m}, b=({b1},{b2})); dropped"
                    ));
                }
                ok
            }
            None => true,
        }
    });

    // exact certification
    let mut accepted: Vec<(GroupElem, Hypersurface, ExactPoint)> = Vec::new();
    let mut have: HashSet<GroupElem> = HashSet::new();
    for g in &candidates {
        if have.contains(g) {
            continue;
        }
        let proposers = sample_of.get(g).map(Vec::as_slice).unwrap_or(&[]);
        let Some(w) = certify_candidate(ctx, floors, g, proposers) else {
            continue;
        };
        let surface = classify_surface(ctx, g)?;
        let ginv = g.inv();
        let inv_surface = classify_surface(ctx, &ginv)?;
        let image = apply(ctx, g, &w);
        have.insert(g.clone());
        accepted.push((g.clone(), surface, w));
        if !have.contains(&ginv) {
            have.insert(ginv.clone());
            accepted.push((ginv, inv_surface, image));
        }
    }

    // deterministic order: walls first, then floors in set order, then gamma
    let surface_rank = |s: &Hypersurface| -> (usize, usize) {
        match s {
            Hypersurface::Wall1 { plus: true } => (0, 0),
            Hypersurface::Wall1 { plus: false } => (1, 0),
            Hypersurface::Wall2 { plus: true } => (2, 0),
            Hypersurface::Wall2 { plus: false } => (3, 0),
            Hypersurface::Wall3 { plus: true } => (4, 0),
            Hypersurface::Wall3 { plus: false } => (5, 0),
            Hypersurface::Floor(c, d) => {
                let idx = floors
                    .pairs
                    .iter()
                    .position(|(cc, dd)| cc == c && dd == d)
                    .unwrap_or(usize::MAX);
                (6, idx)
            }
        }
    };
    accepted.sort_by(|x, y| {
        (surface_rank(&x.1), gamma_key(&x.0)).cmp(&(surface_rank(&y.1), gamma_key(&y.0)))
    });

    let mut sides: Vec<Side> = accepted
        .into_iter()
        .enumerate()
        .map(|(id, (gamma, surface, witness))| Side {
            id,
            gamma,
            surface,
            witness,
            star: usize::MAX,
        })
        .collect();
    let by_gamma: HashMap<GroupElem, usize> =
        sides.iter().map(|s| (s.gamma.clone(), s.id)).collect();
    #[allow(clippy::needless_range_loop)]
    for i in 0..sides.len() {
        let inv = sides[i].gamma.inv();
        let star = by_gamma
            .get(&inv)
            .copied()
            .ok_or_else(|| Error::Pipeline(format!("side {i} lacks its paired side")))?;
        sides[i].star = star;
    }
    Ok(SideSet { sides, by_gamma })
}

fn gamma_key(g: &GroupElem) -> Vec<Int> {
    vec![
        g.a.a.clone(),
        g.a.b.clone(),
        g.b.a.clone(),
        g.b.b.clone(),
        g.c.a.clone(),
        g.c.b.clone(),
        g.d.a.clone(),
        g.d.b.clone(),
    ]
}

/// The standard generating set: `P1`, `P2`, `P3` and one completion per
/// floor pair, with display names.
pub fn standard_generators(
    ctx: &FieldCtx,
    floors: &FloorSet,
) -> Result<Vec<(String, GroupElem)>> {
    let mut out = vec![
        ("P1".to_string(), ctx.p1()),
        ("P2".to_string(), ctx.p2()),
        ("P3".to_string(), ctx.p3()),
    ];
    for (c, d) in &floors.pairs {
        out.push((format!("P[{c};{d}]"), ctx.complete_to_matrix(c, d)?));
    }
    Ok(out)
}

/// Build an exact witness for a candidate. Starting points are the samples
/// that proposed the candidate (by construction on or near its patch) plus
/// a grid over its surface; the best are hill-climbed into the relative
/// interior and then rationalized at increasing precision until the exact
/// certificate holds.
fn certify_candidate(
    ctx: &FieldCtx,
    floors: &FloorSet,
    g: &GroupElem,
    proposers: &[Point<f64>],
) -> Option<ExactPoint> {
    let surface = classify_surface(ctx, g).ok()?;
    let inv_surface = classify_surface(ctx, &g.inv()).ok()?;
    let rows = floors.rows_f64(ctx);
    let score = |p: &Point<f64>| -> f64 {
        let own = margin_excluding(ctx, &rows, &surface, p);
        let img = apply(ctx, g, p);
        own.min(margin_excluding(ctx, &rows, &inv_surface, &img))
    };
    let try_from = |q: &Point<f64>| -> Option<ExactPoint> {
        let (s1, s2) = s_coords(ctx, q);
        let r = (q.y1sq / q.y2sq).sqrt();
        for den in [16i64, 64, 256, 2048, 16384, 131072] {
            if let Some(w) = exact_point_on(ctx, &surface, s1, s2, r, q.y1sq, den) {
                if certify_side_witness(ctx, floors, g, &w).unwrap_or(false) {
                    return Some(w);
                }
            }
        }
        None
    };
    // escalate the patch resolution; thin slivers need the fine passes
    for (pass, n) in [14usize, 40, 80].into_iter().enumerate() {
        let mut scored: Vec<(f64, Point<f64>)> = surface_patch_grid(ctx, &rows, &surface, n)
            .into_iter()
            .map(|p| (score(&p), p))
            .collect();
        if pass == 0 {
            scored.extend(proposers.iter().map(|p| (score(p), p.clone())));
        }
        scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal));
        let best_score = scored.first().map_or(f64::NEG_INFINITY, |(sc, _)| *sc);
        if best_score <= -0.35 {
            return None; // nowhere near a positive patch; don't escalate
        }
        for (_, p) in scored.into_iter().take(8) {
            let improved = improve_sample(ctx, &rows, &surface, score, &p);
            for q in [&improved, &p] {
                if let Some(w) = try_from(q) {
                    return Some(w);
                }
            }
        }
    }
    None
}

/// Grid of float points on one hypersurface, covering the box. The ratio
/// axis is sampled geometrically: patches concentrate near its ends.
fn surface_patch_grid(
    ctx: &FieldCtx,
    rows: &FloorRows,
    surface: &Hypersurface,
    n: usize,
) -> Vec<Point<f64>> {
    let eps = ctx.eps0_knum().to_f64();
    let steps: Vec<f64> = (0..n).map(|i| -0.5 + (i as f64 + 0.5) / n as f64).collect();
    let rs: Vec<f64> = (0..n)
        .map(|i| eps.powi(-2) * eps.powf(4.0 * (i as f64 + 0.5) / n as f64))
        .collect();
    let mut out = Vec::new();
    match surface {
        Hypersurface::Floor(c, d) => {
            let Some(idx) = rows.pairs.iter().position(|(cc, dd)| cc == c && dd == d) else {
                return out;
            };
            for &s1 in &steps {
                for &s2 in &steps {
                    for &r in &rs {
                        let (x1, x2) = sr_to_x(ctx, s1, s2);
                        if let Some(h) = h1_row(&rows.rows[idx], x1, x2, r) {
                            out.push(float_point(ctx, s1, s2, r, h));
                        }
                    }
                }
            }
        }
        Hypersurface::Wall1 { plus } | Hypersurface::Wall2 { plus } => {
            let sv = if *plus { 0.5 } else { -0.5 };
            let first = matches!(surface, Hypersurface::Wall1 { .. });
            for &s in &steps {
                for &r in &rs {
                    let (a, b) = if first { (sv, s) } else { (s, sv) };
                    let h0v = h0_rows(ctx, rows, a, b, r);
                    for l in 0..6 {
                        let h = h0v + 0.02 + (l as f64) * 0.3;
                        out.push(float_point(ctx, a, b, r, h));
                    }
                }
            }
        }
        Hypersurface::Wall3 { plus } => {
            let r = eps.powi(if *plus { 2 } else { -2 });
            for &s1 in &steps {
                for &s2 in &steps {
                    let h0v = h0_rows(ctx, rows, s1, s2, r);
                    for l in 0..6 {
                        let h = h0v + 0.02 + (l as f64) * 0.3;
                        out.push(float_point(ctx, s1, s2, r, h));
                    }
                }
            }
        }
    }
    out
}

/// Smallest slack among the closed-domain constraints other than `surface`;
/// positive iff the point is in the relative interior of the side patch.
fn margin_excluding(
    ctx: &FieldCtx,
    rows: &FloorRows,
    surface: &Hypersurface,
    p: &Point<f64>,
) -> f64 {
    let (s1, s2) = s_coords(ctx, p);
    let eps = ctx.eps0_knum().to_f64();
    let r = (p.y1sq / p.y2sq).sqrt();
    let mut m = f64::INFINITY;
    let walls = [
        (Hypersurface::Wall1 { plus: true }, 0.5 - s1),
        (Hypersurface::Wall1 { plus: false }, s1 + 0.5),
        (Hypersurface::Wall2 { plus: true }, 0.5 - s2),
        (Hypersurface::Wall2 { plus: false }, s2 + 0.5),
        (Hypersurface::Wall3 { plus: true }, eps.powi(2) - r),
        (Hypersurface::Wall3 { plus: false }, r - eps.powi(-2)),
    ];
    for (wall, margin) in walls {
        if &wall != surface {
            m = m.min(margin);
        }
    }
    for (row, (c, d)) in rows.rows.iter().zip(rows.pairs.iter()) {
        if let Hypersurface::Floor(sc, sd) = surface {
            if sc == c && sd == d {
                continue;
            }
        }
        m = m.min(norm_czd(row, p) - 1.0);
    }
    m
}

/// Pattern-search the free coordinates of a surface sample to maximize the
/// interior margin, staying on the surface. Diagonal moves are essential:
/// thin patches often require several coordinates to move together.
fn improve_sample(
    ctx: &FieldCtx,
    rows: &FloorRows,
    surface: &Hypersurface,
    score: impl Fn(&Point<f64>) -> f64,
    p: &Point<f64>,
) -> Point<f64> {
    let (s1, s2) = s_coords(ctx, p);
    let r = (p.y1sq / p.y2sq).sqrt();
    let h = (p.y1sq * p.y2sq).sqrt();
    let mut v = [s1, s2, r, h];
    // free coordinates per surface; the pinned one is re-imposed by lift
    let free: &[usize] = match surface {
        Hypersurface::Wall1 { .. } => &[1, 2, 3],
        Hypersurface::Wall2 { .. } => &[0, 2, 3],
        Hypersurface::Wall3 { .. } => &[0, 1, 3],
        Hypersurface::Floor(..) => &[0, 1, 2],
    };
    let lift = |v: [f64; 4]| -> Option<Point<f64>> { lift_to_surface(ctx, rows, surface, v) };
    let Some(mut best_p) = lift(v) else {
        return p.clone();
    };
    let mut best = score(&best_p);
    let mut step = 0.08;
    while step > 5e-4 {
        let mut moved = false;
        // all nonzero {-1,0,1} direction patterns over the free coordinates
        let n_dirs = 3usize.pow(free.len() as u32);
        for code in 1..n_dirs {
            let mut w = v;
            let mut rem = code;
            for &c in free {
                let d = (rem % 3) as i64 - 1;
                rem /= 3;
                w[c] += d as f64 * step * if c == 2 { w[2] } else { 1.0 };
            }
            if w[2] <= 1e-9 || w[3] <= 1e-9 {
                continue;
            }
            if let Some(q) = lift(w) {
                let sc = score(&q);
                if sc > best {
                    best = sc;
                    best_p = q;
                    v = w;
                    moved = true;
                }
            }
        }
        if !moved {
            step *= 0.5;
        }
    }
    best_p
}

/// Re-impose the surface equation on box coordinates `(s1, s2, r, h)`.
fn lift_to_surface(
    ctx: &FieldCtx,
    rows: &FloorRows,
    surface: &Hypersurface,
    mut v: [f64; 4],
) -> Option<Point<f64>> {
    let eps = ctx.eps0_knum().to_f64();
    match surface {
        Hypersurface::Wall1 { plus } => v[0] = if *plus { 0.5 } else { -0.5 },
        Hypersurface::Wall2 { plus } => v[1] = if *plus { 0.5 } else { -0.5 },
        Hypersurface::Wall3 { plus } => v[2] = eps.powi(if *plus { 2 } else { -2 }),
        Hypersurface::Floor(c, d) => {
            let idx = rows
                .pairs
                .iter()
                .position(|(cc, dd)| cc == c && dd == d)?;
            let (x1, x2) = sr_to_x(ctx, v[0], v[1]);
            v[3] = h1_row(&rows.rows[idx], x1, x2, v[2])?;
        }
    }
    Some(float_point(ctx, v[0], v[1], v[2], v[3]))
}

/// Exact point on a hypersurface near float box data `(s1, s2, r)` with
/// `y1^2` near `y1sq`, denominators bounded by `den`.
fn exact_point_on(
    ctx: &FieldCtx,
    surface: &Hypersurface,
    s1: f64,
    s2: f64,
    r: f64,
    y1sq: f64,
    den: i64,
) -> Option<ExactPoint> {
    let clamp_half = |v: Rat| -> Rat {
        let half = Rat::new(Int::one(), Int::from(2));
        if v > half {
            half
        } else if v < -half.clone() {
            -half
        } else {
            v
        }
    };
    match surface {
        Hypersurface::Wall1 { plus } => {
            let s1r = Rat::new(Int::from(if *plus { 1 } else { -1 }), Int::from(2));
            let s2r = clamp_half(rationalize(s2, den));
            let rr = rationalize(r, den);
            let hr = rationalize((y1sq / r).max(1e-6), den);
            if !rr.is_positive() || !hr.is_positive() {
                return None;
            }
            Some(SRPoint::new(s1r, s2r, rr, hr).ok()?.to_point::<KNum>(ctx))
        }
        Hypersurface::Wall2 { plus } => {
            let s2r = Rat::new(Int::from(if *plus { 1 } else { -1 }), Int::from(2));
            let s1r = clamp_half(rationalize(s1, den));
            let rr = rationalize(r, den);
            let hr = rationalize((y1sq / r).max(1e-6), den);
            if !rr.is_positive() || !hr.is_positive() {
                return None;
            }
            Some(SRPoint::new(s1r, s2r, rr, hr).ok()?.to_point::<KNum>(ctx))
        }
        Hypersurface::Wall3 { plus } => {
            // r = eps^{±2} exactly: y1^2 = eps^{±4} y2^2, both in the field
            let s1r = clamp_half(rationalize(s1, den));
            let s2r = clamp_half(rationalize(s2, den));
            let e = if *plus { 4 } else { -4 };
            let y2r = rationalize((y1sq / ctx.eps0_knum().to_f64().powi(e as i32)).max(1e-6), den);
            if !y2r.is_positive() {
                return None;
            }
            let w = ctx.omega_knum();
            let wc = ctx.omega_conj_knum();
            let x1 = KNum::from_rat(s1r.clone()) + KNum::from_rat(s2r.clone()) * w;
            let x2 = KNum::from_rat(s1r) + KNum::from_rat(s2r) * wc;
            let y2 = KNum::from_rat(y2r);
            let y1 = ctx.eps0_pow_knum(e) * y2.clone();
            Some(Point::new(x1, x2, y1, y2))
        }
        Hypersurface::Floor(c, d) => {
            let s1r = clamp_half(rationalize(s1, den));
            let s2r = clamp_half(rationalize(s2, den));
            let y1r = rationalize(y1sq.max(1e-6), den * den);
            solve_floor_point(ctx, c, d, &s1r, &s2r, &y1r)
        }
    }
}

// ---------------------------------------------------------------------------
// Coverage certificate
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct CoverageReport {
    pub samples: usize,
    pub uncovered: usize,
    pub ok: bool,
    /// Uncovered boundary samples with the hypersurface they sit on; fed
    /// back into side discovery.
    pub uncovered_points: Vec<(Hypersurface, Point<f64>)>,
}

/// Random boundary samples must each lie on some accepted side within
/// tolerance: on its surface, in `F`, and with the image in `F`.
pub fn verify_coverage(
    ctx: &FieldCtx,
    floors: &FloorSet,
    sides: &SideSet,
    n: usize,
    seed: u64,
    tol: f64,
) -> CoverageReport {
    let rows = floors.rows_f64(ctx);
    let eps = ctx.eps0_knum().to_f64();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut uncovered = 0usize;
    let mut uncovered_points = Vec::new();
    for _ in 0..n {
        let s1: f64 = rng.gen_range(-0.5..0.5);
        let s2: f64 = rng.gen_range(-0.5..0.5);
        let r_uniform: f64 = rng.gen_range(eps.powi(-2)..eps.powi(2));
        let class = rng.gen_range(0u32..12);
        let (surface, p) = match class {
            // floor graph point, on the highest floor there
            0..=5 => {
                let (x1, x2) = sr_to_x(ctx, s1, s2);
                let mut best: Option<(usize, f64)> = None;
                for (i, row) in rows.rows.iter().enumerate() {
                    if let Some(v) = h1_row(row, x1, x2, r_uniform) {
                        if best.is_none_or(|(_, bh)| v > bh) {
                            best = Some((i, v));
                        }
                    }
                }
                let Some((idx, h)) = best else { continue };
                let (c, d) = &floors.pairs[idx];
                (
                    Hypersurface::Floor(c.clone(), d.clone()),
                    float_point(ctx, s1, s2, r_uniform, h),
                )
            }
            6 | 7 => {
                let plus = class == 6;
                let sv = if plus { 0.5 } else { -0.5 };
                let h0v = h0_rows(ctx, &rows, sv, s2, r_uniform);
                let h = rng.gen_range((h0v + 1e-3)..(h0v + 1.5));
                (
                    Hypersurface::Wall1 { plus },
                    float_point(ctx, sv, s2, r_uniform, h),
                )
            }
            8 | 9 => {
                let plus = class == 8;
                let sv = if plus { 0.5 } else { -0.5 };
                let h0v = h0_rows(ctx, &rows, s1, sv, r_uniform);
                let h = rng.gen_range((h0v + 1e-3)..(h0v + 1.5));
                (
                    Hypersurface::Wall2 { plus },
                    float_point(ctx, s1, sv, r_uniform, h),
                )
            }
            _ => {
                let plus = class == 10;
                let r = if plus { eps.powi(2) } else { eps.powi(-2) };
                let h0v = h0_rows(ctx, &rows, s1, s2, r);
                let h = rng.gen_range((h0v + 1e-3)..(h0v + 1.5));
                (Hypersurface::Wall3 { plus }, float_point(ctx, s1, s2, r, h))
            }
        };
        if !in_f_float(ctx, &rows, &p, tol) {
            continue; // sampled outside the closed domain (floor dips); skip
        }
        let covered = sides.sides.iter().any(|s| {
            surface_residual(ctx, &s.surface, &p).abs() <= tol.max(1e-6)
                && in_f_float(ctx, &rows, &apply(ctx, &s.gamma, &p), 1e-6)
        });
        if !covered {
            uncovered += 1;
            uncovered_points.push((surface, p));
        }
    }
    CoverageReport {
        samples: n,
        uncovered,
        ok: uncovered == 0,
        uncovered_points,
    }
}

// ---------------------------------------------------------------------------
// Edges
// ---------------------------------------------------------------------------

/// Float membership of `p` in side `s` within `tol`.
fn side_contains(
    ctx: &FieldCtx,
    rows: &FloorRows,
    side: &Side,
    p: &Point<f64>,
    tol: f64,
) -> bool {
    surface_residual(ctx, &side.surface, p).abs() <= tol
        && in_f_float(ctx, rows, p, tol)
        && in_f_float(ctx, rows, &apply(ctx, &side.gamma, p), tol)
}

/// Residuals of the two equations cutting out the edge of a side pair.
/// For distinct surfaces these are the two surface equations; for sides on
/// one surface the second equation is the image side's surface at
/// `gamma_i(p)`.
fn edge_residual(
    ctx: &FieldCtx,
    si: &Side,
    sj: &Side,
    second: &Hypersurface,
    p: &Point<f64>,
) -> [f64; 2] {
    let g1 = surface_residual(ctx, &si.surface, p);
    let g2 = if si.surface == sj.surface {
        surface_residual(ctx, second, &apply(ctx, &si.gamma, p))
    } else {
        surface_residual(ctx, &sj.surface, p)
    };
    [g1, g2]
}

fn srh_point(ctx: &FieldCtx, v: [f64; 4]) -> Point<f64> {
    float_point(ctx, v[0], v[1], v[2], v[3])
}

/// Damped Gauss-Newton on `(s1, s2, r, h)` for the two edge equations.
fn newton_edge(
    ctx: &FieldCtx,
    si: &Side,
    sj: &Side,
    second: &Hypersurface,
    start: [f64; 4],
    tol: f64,
) -> Option<[f64; 4]> {
    let mut v = start;
    let res = |v: [f64; 4]| edge_residual(ctx, si, sj, second, &srh_point(ctx, v));
    let norm2 = |r: [f64; 2]| r[0] * r[0] + r[1] * r[1];
    let mut r = res(v);
    for _ in 0..80 {
        if norm2(r).sqrt() <= tol {
            return Some(v);
        }
        // finite-difference Jacobian 2x4
        let mut jac = [[0.0f64; 4]; 2];
        for c in 0..4 {
            let hstep = 1e-7 * (1.0 + v[c].abs());
            let mut vp = v;
            vp[c] += hstep;
            let mut vm = v;
            vm[c] -= hstep;
            if vm[2] <= 0.0 || vm[3] <= 0.0 {
                vm = v;
            }
            let rp = res(vp);
            let rm = res(vm);
            let denom = vp[c] - vm[c];
            jac[0][c] = (rp[0] - rm[0]) / denom;
            jac[1][c] = (rp[1] - rm[1]) / denom;
        }
        // minimum-norm step: J^T (J J^T)^(-1) (-r)
        let a = dot4(jac[0], jac[0]);
        let b = dot4(jac[0], jac[1]);
        let d = dot4(jac[1], jac[1]);
        let det = a * d - b * b;
        if det.abs() < 1e-18 {
            return None;
        }
        let y0 = (-r[0] * d - -r[1] * b) / det;
        let y1 = (-r[1] * a - -r[0] * b) / det;
        let step = [
            jac[0][0] * y0 + jac[1][0] * y1,
            jac[0][1] * y0 + jac[1][1] * y1,
            jac[0][2] * y0 + jac[1][2] * y1,
            jac[0][3] * y0 + jac[1][3] * y1,
        ];
        let mut lambda = 1.0;
        let mut improved = false;
        for _ in 0..20 {
            let cand = [
                v[0] + lambda * step[0],
                v[1] + lambda * step[1],
                v[2] + lambda * step[2],
                v[3] + lambda * step[3],
            ];
            if cand[2] > 1e-6 && cand[3] > 1e-6 {
                let rc = res(cand);
                if norm2(rc) < norm2(r) {
                    v = cand;
                    r = rc;
                    improved = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !improved {
            return None;
        }
    }
    if norm2(r).sqrt() <= tol {
        Some(v)
    } else {
        None
    }
}

/// Locate the edges as witnesses on each side pair. Returns the edge list;
/// emits a warning line per side pair with more than one well-separated
/// witness component.
pub fn find_edges(
    ctx: &FieldCtx,
    floors: &FloorSet,
    sides: &SideSet,
    params: &RunParams,
    warnings: &mut Vec<String>,
) -> Result<Vec<Edge>> {
    let rows = floors.rows_f64(ctx);
    let eps = ctx.eps0_knum().to_f64();
    let n_grid = 9usize;
    let mut grid: Vec<[f64; 4]> = Vec::new();
    for i in 0..n_grid {
        let s1 = -0.5 + (i as f64 + 0.5) / n_grid as f64;
        for j in 0..n_grid {
            let s2 = -0.5 + (j as f64 + 0.5) / n_grid as f64;
            for l in 0..n_grid {
                let r = eps.powi(-2) + (eps.powi(2) - eps.powi(-2)) * (l as f64 + 0.5) / n_grid as f64;
                let h0v = h0_rows(ctx, &rows, s1, s2, r);
                for hs in 0..4 {
                    let h = h0v + [0.0, 0.08, 0.3, 0.8][hs];
                    grid.push([s1, s2, r, h.max(1e-3)]);
                }
            }
        }
    }

    let mut edges: Vec<Edge> = Vec::new();
    for i in 0..sides.sides.len() {
        for j in (i + 1)..sides.sides.len() {
            let si = &sides.sides[i];
            let sj = &sides.sides[j];
            if si.surface == sj.surface && si.star == j {
                // paired sides on one surface meet only in lower dimension
                // when they are mirror images; still allow the search
            }
            let second = if si.surface == sj.surface {
                classify_surface(ctx, &sj.gamma.mul(&si.gamma.inv()))?
            } else {
                sj.surface.clone()
            };
            // rank seeds by closeness to both surfaces
            let mut seeds: Vec<(f64, [f64; 4])> = grid
                .iter()
                .filter_map(|v| {
                    let p = srh_point(ctx, *v);
                    if !in_f_float(ctx, &rows, &p, 0.05) {
                        return None;
                    }
                    let r = edge_residual(ctx, si, sj, &second, &p);
                    let score = r[0].abs() + r[1].abs();
                    (score < 1.0).then_some((score, *v))
                })
                .collect();
            seeds.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
            let mut found: Vec<([f64; 4], f64)> = Vec::new();
            for (_, seed) in seeds.into_iter().take(24) {
                let Some(v) = newton_edge(ctx, si, sj, &second, seed, params.newton_tol) else {
                    continue;
                };
                let p = srh_point(ctx, v);
                // must belong to both sides
                if !side_contains(ctx, &rows, si, &p, params.on_tol)
                    || !side_contains(ctx, &rows, sj, &p, params.on_tol)
                {
                    continue;
                }
                // and to no other side
                let mut extra = None;
                for other in &sides.sides {
                    if other.id == si.id || other.id == sj.id {
                        continue;
                    }
                    if side_contains(ctx, &rows, other, &p, params.off_tol) {
                        extra = Some(other.id);
                        break;
                    }
                }
                if extra.is_some() {
                    continue; // seed converged to a lower-dimensional cell
                }
                let margin = other_side_margin(ctx, &rows, sides, si.id, sj.id, &p);
                if found
                    .iter()
                    .all(|(w, _)| dist4(*w, v) > params.cluster_tol)
                {
                    found.push((v, margin));
                }
            }
            if found.is_empty() {
                continue;
            }
            // component count at the coarse radius
            let components = count_components(&found, params.component_radius);
            if components > 1 {
                warnings.push(format!(
                    "side pair ({}, {}) yields {components} witness components; edge may be disconnected",
                    si.id, sj.id
                ));
            }
            let best = found
                .iter()
                .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal))
                .unwrap();
            edges.push(Edge {
                id: edges.len(),
                sides: (si.id, sj.id),
                witness: srh_point(ctx, best.0),
                tolerance: params.on_tol,
                components,
            });
        }
    }
    Ok(edges)
}

fn other_side_margin(
    ctx: &FieldCtx,
    _rows: &FloorRows,
    sides: &SideSet,
    i: usize,
    j: usize,
    p: &Point<f64>,
) -> f64 {
    sides
        .sides
        .iter()
        .filter(|s| s.id != i && s.id != j)
        .map(|s| surface_residual(ctx, &s.surface, p).abs())
        .fold(f64::INFINITY, f64::min)
}

fn dot4(a: [f64; 4], b: [f64; 4]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

fn dist4(a: [f64; 4], b: [f64; 4]) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn count_components(points: &[([f64; 4], f64)], radius: f64) -> usize {
    let n = points.len();
    let mut comp: Vec<usize> = (0..n).collect();
    fn root(comp: &mut [usize], mut i: usize) -> usize {
        while comp[i] != i {
            comp[i] = comp[comp[i]];
            i = comp[i];
        }
        i
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if dist4(points[i].0, points[j].0) <= radius {
                let (ri, rj) = (root(&mut comp, i), root(&mut comp, j));
                comp[ri] = rj;
            }
        }
    }
    let mut roots: Vec<usize> = (0..n).map(|i| root(&mut comp, i)).collect();
    roots.sort_unstable();
    roots.dedup();
    roots.len()
}

// ---------------------------------------------------------------------------
// Cycles
// ---------------------------------------------------------------------------

pub struct EdgeStore {
    edges: Vec<Edge>,
    by_pair: HashMap<(usize, usize), usize>,
}

impl EdgeStore {
    fn new(edges: Vec<Edge>) -> EdgeStore {
        let by_pair = edges.iter().map(|e| (e.sides, e.id)).collect();
        EdgeStore { edges, by_pair }
    }

    fn lookup_or_insert(
        &mut self,
        pair: (usize, usize),
        witness: Point<f64>,
        tol: f64,
    ) -> usize {
        let key = (pair.0.min(pair.1), pair.0.max(pair.1));
        if let Some(&id) = self.by_pair.get(&key) {
            return id;
        }
        let id = self.edges.len();
        self.edges.push(Edge {
            id,
            sides: key,
            witness,
            tolerance: tol,
            components: 1,
        });
        self.by_pair.insert(key, id);
        id
    }
}

/// The two sides containing a float point, or an error naming the witness.
/// A gap (fewer than two sides) also deposits the point and its nearby
/// hypersurfaces into `gaps`, so the caller can reseed side discovery.
fn sides_at(
    ctx: &FieldCtx,
    floors: &FloorSet,
    rows: &FloorRows,
    sides: &SideSet,
    p: &Point<f64>,
    tol: f64,
    gaps: &mut Vec<(Hypersurface, Point<f64>)>,
) -> Result<(usize, usize)> {
    let mut hits: Vec<usize> = Vec::new();
    for s in &sides.sides {
        if side_contains(ctx, rows, s, p, tol) {
            hits.push(s.id);
        }
    }
    if hits.len() == 2 {
        Ok((hits[0], hits[1]))
    } else {
        if hits.len() < 2 {
            for surface in near_surfaces(ctx, floors, p, 1e-6) {
                gaps.push((surface, p.clone()));
            }
        }
        let (s1, s2) = s_coords(ctx, p);
        Err(Error::Degeneracy(format!(
            "edge witness at (s1={s1:.6}, s2={s2:.6}) lies on {} sides: {:?}",
            hits.len(),
            hits
        )))
    }
}

/// Hypersurfaces of the catalog passing within `tol` of a float point.
fn near_surfaces(ctx: &FieldCtx, floors: &FloorSet, p: &Point<f64>, tol: f64) -> Vec<Hypersurface> {
    let mut out = Vec::new();
    for wall in Hypersurface::six_walls() {
        if surface_residual(ctx, &wall, p).abs() <= tol {
            out.push(wall);
        }
    }
    for (c, d) in &floors.pairs {
        let fl = Hypersurface::Floor(c.clone(), d.clone());
        if surface_residual(ctx, &fl, p).abs() <= tol {
            out.push(fl);
        }
    }
    out
}

/// Trace the cycle determined by `(edge, side)` per the recurrence
/// `E_{i+1} = gamma_{S_i}(E_i)`, with `S_{i+1}` the unique side other than
/// `S_i^*` containing the image.
#[allow(clippy::too_many_arguments)]
pub fn cycle_from(
    ctx: &FieldCtx,
    floors: &FloorSet,
    sides: &SideSet,
    store: &mut EdgeStore,
    edge0: usize,
    side0: usize,
    params: &RunParams,
    gaps: &mut Vec<(Hypersurface, Point<f64>)>,
) -> Result<Cycle> {
    let rows = floors.rows_f64(ctx);
    let mut entries: Vec<(usize, usize)> = Vec::new();
    let mut composite = GroupElem::identity();
    let (mut e, mut s) = (edge0, side0);
    let cap = 4 * store.edges.len() + 64;
    loop {
        entries.push((e, s));
        if entries.len() > cap {
            return Err(Error::IterationCap(format!(
                "cycle from edge {edge0}, side {side0} did not close within {cap} steps"
            )));
        }
        let gamma = &sides.sides[s].gamma;
        composite = gamma.mul(&composite);
        let image = apply(ctx, gamma, &store.edges[e].witness);
        let (h1, h2) = sides_at(
            ctx,
            floors,
            &rows,
            sides,
            &image,
            params.on_tol.max(1e-6),
            gaps,
        )?;
        let star = sides.sides[s].star;
        let next_side = if h1 == star {
            h2
        } else if h2 == star {
            h1
        } else {
            return Err(Error::Degeneracy(format!(
                "image of edge {e} under side {s} misses the paired side {star}: found ({h1}, {h2})"
            )));
        };
        let next_edge = store.lookup_or_insert((star, next_side), image, params.on_tol);
        e = next_edge;
        s = next_side;
        if e == edge0 && s == side0 {
            break;
        }
    }
    let order = composite_order(&composite, params.order_cap)?;
    Ok(Cycle {
        entries,
        composite,
        order,
    })
}

fn composite_order(g: &GroupElem, cap: u32) -> Result<u32> {
    let mut pow = g.clone();
    for m in 1..=cap {
        if pow.is_identity() {
            return Ok(m);
        }
        pow = pow.mul(g);
    }
    Err(Error::IterationCap(format!(
        "cycle composite has order above {cap}: {g}"
    )))
}

/// Trace every (edge, side) pair once, deduplicating cycles by canonical
/// key. On a gap the collected reseeding points come back with the error.
#[allow(clippy::type_complexity)]
fn trace_all_cycles(
    ctx: &FieldCtx,
    floors: &FloorSet,
    sides: &SideSet,
    edges: Vec<Edge>,
    params: &RunParams,
) -> std::result::Result<(EdgeStore, Vec<Cycle>), (Error, Vec<(Hypersurface, Point<f64>)>)> {
    let mut store = EdgeStore::new(edges);
    let mut gaps: Vec<(Hypersurface, Point<f64>)> = Vec::new();
    let mut visited: HashSet<(usize, usize)> = HashSet::new();
    let mut keys: HashSet<Vec<usize>> = HashSet::new();
    let mut cycles: Vec<Cycle> = Vec::new();
    let mut eidx = 0;
    while eidx < store.edges.len() {
        let pair = store.edges[eidx].sides;
        for side in [pair.0, pair.1] {
            if visited.contains(&(eidx, side)) {
                continue;
            }
            match cycle_from(ctx, floors, sides, &mut store, eidx, side, params, &mut gaps) {
                Ok(cyc) => {
                    for ent in &cyc.entries {
                        visited.insert(*ent);
                    }
                    let key = cycle_key(sides, &cyc.entries);
                    if keys.insert(key) {
                        cycles.push(cyc);
                    }
                }
                Err(e) => return Err((e, gaps)),
            }
        }
        eidx += 1;
    }
    Ok((store, cycles))
}

/// Canonical key of a cycle: the lexicographically least rotation of the
/// side-id sequence or of the starred reversal.
fn cycle_key(sides: &SideSet, entries: &[(usize, usize)]) -> Vec<usize> {
    let seq: Vec<usize> = entries.iter().map(|(_, s)| *s).collect();
    let starred_rev: Vec<usize> = entries
        .iter()
        .rev()
        .map(|(_, s)| sides.sides[*s].star)
        .collect();
    let mut best: Option<Vec<usize>> = None;
    for base in [&seq, &starred_rev] {
        for shift in 0..base.len() {
            let rot: Vec<usize> = (0..base.len()).map(|i| base[(i + shift) % base.len()]).collect();
            if best.as_ref().is_none_or(|b| &rot < b) {
                best = Some(rot);
            }
        }
    }
    best.unwrap_or_default()
}

// ---------------------------------------------------------------------------
// Presentation
// ---------------------------------------------------------------------------

/// Run the whole pipeline for a class-number-one field.
pub fn build_presentation(ctx: &FieldCtx, params: &RunParams) -> Result<Presentation> {
    let floors = enumerate_s1(ctx)?;
    build_presentation_with(ctx, &floors, params)
}

pub fn build_presentation_with(
    ctx: &FieldCtx,
    floors: &FloorSet,
    params: &RunParams,
) -> Result<Presentation> {
    let mut warnings = Vec::new();
    let mut params = params.clone();
    let mut extra: Vec<(Hypersurface, Point<f64>)> = Vec::new();
    let mut round = 0;
    let (sides, coverage, store, cycles) = loop {
        let sides = find_sides_inner(ctx, floors, &params, &extra, &mut warnings)?;
        if sides.is_empty() {
            return Err(Error::Pipeline("no sides were certified".into()));
        }
        let coverage = verify_coverage(
            ctx,
            floors,
            &sides,
            params.coverage_samples,
            params.seed,
            1e-6,
        );
        if !coverage.ok {
            if round >= params.growth_rounds {
                return Err(Error::Pipeline(format!(
                    "boundary coverage failed: {} of {} samples lie on no accepted side",
                    coverage.uncovered, coverage.samples
                )));
            }
            round += 1;
            // uncovered samples are the sharpest discovery seeds; also widen caps
            extra.extend(coverage.uncovered_points.iter().cloned());
            params.q_max *= 2;
            params.m_max *= 2;
            params.b_max *= 2;
            params.side_grid = params.side_grid * 2 + 1;
            warnings.push(format!(
                "coverage failed ({} of {} samples uncovered); reseeding from them and growing caps to q={}, m={}, b={}, grid={}",
                coverage.uncovered, coverage.samples, params.q_max, params.m_max, params.b_max,
                params.side_grid
            ));
            continue;
        }

        let edges = find_edges(ctx, floors, &sides, &params, &mut warnings)?;
        if edges.is_empty() {
            return Err(Error::Pipeline("no edges found".into()));
        }
        match trace_all_cycles(ctx, floors, &sides, edges, &params) {
            Ok((store, cycles)) => break (sides, coverage, store, cycles),
            Err((err, gaps)) => {
                if gaps.is_empty() || round >= params.growth_rounds {
                    return Err(err);
                }
                round += 1;
                warnings.push(format!(
                    "cycle tracing exposed {} boundary gap(s) ({err}); reseeding side discovery",
                    gaps.len()
                ));
                extra.extend(gaps);
                continue;
            }
        }
    };

    // relations
    let mut pairing_relations: Vec<(usize, usize)> = Vec::new();
    for s in &sides.sides {
        let star = s.star;
        if s.id <= star {
            pairing_relations.push((s.id, star));
        }
    }
    for (a, b) in &pairing_relations {
        let prod = sides.sides[*a].gamma.mul(&sides.sides[*b].gamma);
        if !prod.is_identity() {
            return Err(Error::Pipeline(format!(
                "pairing relation ({a}, {b}) fails: product {prod}"
            )));
        }
    }
    let mut cycle_relations: Vec<(Vec<usize>, u32)> = Vec::new();
    for cyc in &cycles {
        // composite = gamma_{S_n} ... gamma_{S_1}: emit ids last-to-first
        let word: Vec<usize> = cyc.entries.iter().rev().map(|(_, s)| *s).collect();
        let mut relator = GroupElem::identity();
        for _ in 0..cyc.order {
            for s in &word {
                relator = relator.mul(&sides.sides[*s].gamma);
            }
        }
        if !relator.is_identity() {
            return Err(Error::Pipeline(format!(
                "cycle relation {:?}^{} does not verify",
                word, cyc.order
            )));
        }
        cycle_relations.push((word, cyc.order));
    }
    cycle_relations.sort();
    cycle_relations.dedup();

    Ok(Presentation {
        k: ctx.k,
        floors: floors.clone(),
        sides,
        edges: store.edges,
        cycles,
        pairing_relations,
        cycle_relations,
        coverage,
        warnings,
    })
}

/// Exponent-sum rows of all relators over the side generators, for the
/// abelianization sanity check.
pub fn abelianization_rows(pres: &Presentation) -> Vec<Vec<i64>> {
    let n = pres.sides.len();
    let mut rows = Vec::new();
    for (a, b) in &pres.pairing_relations {
        let mut row = vec![0i64; n];
        row[*a] += 1;
        row[*b] += 1;
        rows.push(row);
    }
    for (word, m) in &pres.cycle_relations {
        let mut row = vec![0i64; n];
        for s in word {
            row[*s] += *m as i64;
        }
        rows.push(row);
    }
    rows
}

// ---------------------------------------------------------------------------
// Generator words and decomposition
// ---------------------------------------------------------------------------

/// Token alphabet of the standard generators.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GenTok {
    P1,
    P2,
    P3,
    /// Completion of the floor pair at this index of the floor set.
    Floor(usize),
}

pub type GenWord = Vec<(GenTok, i64)>;

pub fn eval_gen_word(ctx: &FieldCtx, reducer: &Reducer, word: &GenWord) -> GroupElem {
    let mut acc = GroupElem::identity();
    for (tok, e) in word {
        let base = match tok {
            GenTok::P1 => ctx.p1(),
            GenTok::P2 => ctx.p2(),
            GenTok::P3 => ctx.p3(),
            GenTok::Floor(i) => reducer.completion(*i).clone(),
        };
        let factor = if *e < 0 { base.inv() } else { base };
        for _ in 0..e.unsigned_abs() {
            acc = acc.mul(&factor);
        }
    }
    acc
}

/// Express `m` as a word in `P1, P2, P3, P_(c,d)` by reducing the image of
/// the interior base point `(0, 0, 1, 2)`; the word is verified exactly.
pub fn decompose(ctx: &FieldCtx, reducer: &Reducer, m: &GroupElem) -> Result<GenWord> {
    let z0 = SRPoint::from_i64(0, 0, 1, 2).to_point::<KNum>(ctx);
    let moved = apply(ctx, m, &z0);
    let out = reducer.reduce(&moved)?;
    if out.reduced != z0 {
        return Err(Error::Pipeline(
            "reduction did not return the base point; input not in the group?".into(),
        ));
    }
    // gamma * m fixes the interior point, hence is the identity
    if !out.gamma.mul(m).is_identity() {
        return Err(Error::Pipeline(
            "reduction transformation does not invert the input".into(),
        ));
    }
    // m = gamma^-1: reverse the word and invert each letter
    let word: GenWord = out
        .word
        .iter()
        .rev()
        .map(|step| match step {
            Step::P1(e) => (GenTok::P1, -e),
            Step::P2(e) => (GenTok::P2, -e),
            Step::P3(e) => (GenTok::P3, -e),
            Step::Floor(i) => (GenTok::Floor(*i), -1),
        })
        .collect();
    let check = eval_gen_word(ctx, reducer, &word);
    if &check != m {
        return Err(Error::Pipeline(format!(
            "decomposition check failed: word evaluates to {check}, expected {m}"
        )));
    }
    Ok(word)
}

pub fn gen_word_to_string(floors: &FloorSet, word: &GenWord) -> String {
    if word.is_empty() {
        return "1".into();
    }
    word.iter()
        .map(|(tok, e)| {
            let name = match tok {
                GenTok::P1 => "P1".to_string(),
                GenTok::P2 => "P2".to_string(),
                GenTok::P3 => "P3".to_string(),
                GenTok::Floor(i) => {
                    let (c, d) = &floors.pairs[*i];
                    format!("P[{c};{d}]")
                }
            };
            match e {
                1 => name,
                _ => format!("{name}^{e}"),
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

fn quad_json(x: &QuadInt) -> Value {
    json!([x.a.to_string(), x.b.to_string()])
}

fn matrix_json(g: &GroupElem) -> Value {
    json!([
        [quad_json(&g.a), quad_json(&g.b)],
        [quad_json(&g.c), quad_json(&g.d)]
    ])
}

impl Presentation {
    pub fn generator_name(i: usize) -> String {
        format!("g{i}")
    }

    pub fn to_json(&self, ctx: &FieldCtx) -> Value {
        let generators: Vec<Value> = self
            .sides
            .sides
            .iter()
            .map(|s| {
                json!({
                    "name": Self::generator_name(s.id),
                    "matrix": matrix_json(&s.gamma),
                    "surface": s.surface.label(),
                    "star": Self::generator_name(s.star),
                })
            })
            .collect();
        let pairing: Vec<Value> = self
            .pairing_relations
            .iter()
            .map(|(a, b)| {
                json!([Self::generator_name(*a), Self::generator_name(*b)])
            })
            .collect();
        let cycles: Vec<Value> = self
            .cycle_relations
            .iter()
            .map(|(word, m)| {
                json!({
                    "word": word.iter().map(|s| Self::generator_name(*s)).collect::<Vec<_>>(),
                    "power": m,
                })
            })
            .collect();
        json!({
            "k": self.k,
            "k0": ctx.k0,
            "eps0": quad_json(&ctx.eps0),
            "generators": generators,
            "pairing_relations": pairing,
            "cycle_relations": cycles,
            "verified": true,
            "coverage_samples": self.coverage.samples,
            "warnings": self.warnings,
        })
    }

    pub fn to_text(&self, ctx: &FieldCtx) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "field k = {} (k0 = {}, eps0 = {}, w = (1 + sqrt {})/{})\n",
            self.k, ctx.k0, ctx.eps0, self.k, ctx.k0
        ));
        out.push_str(&format!(
            "floor pairs: {}   sides: {}   edges: {}   cycles: {}\n\n",
            self.floors.pairs.len(),
            self.sides.len(),
            self.edges.len(),
            self.cycle_relations.len()
        ));
        out.push_str("generators (one per side):\n");
        for s in &self.sides.sides {
            out.push_str(&format!(
                "  {} = {}   on {}   paired with {}\n",
                Self::generator_name(s.id),
                s.gamma,
                s.surface.label(),
                Self::generator_name(s.star)
            ));
        }
        out.push_str("\npairing relations:\n");
        for (a, b) in &self.pairing_relations {
            out.push_str(&format!(
                "  {} {}\n",
                Self::generator_name(*a),
                Self::generator_name(*b)
            ));
        }
        out.push_str("\ncycle relations:\n");
        for (word, m) in &self.cycle_relations {
            let w = word
                .iter()
                .map(|s| Self::generator_name(*s))
                .collect::<Vec<_>>()
                .join(" ");
            out.push_str(&format!("  ({w})^{m}\n"));
        }
        if !self.warnings.is_empty() {
            out.push_str("\nwarnings:\n");
            for w in &self.warnings {
                out.push_str(&format!("  {w}\n"));
            }
        }
        out
    }

    /// Witness dump: one CSV line per side and per edge, for plotting.
    pub fn witnesses_csv(&self, ctx: &FieldCtx) -> String {
        let mut out = String::from("kind,id,surface,s1,s2,r,h\n");
        for s in &self.sides.sides {
            let (s1, s2) = s_coords(ctx, &s.witness);
            let rsq = s.witness.rsq();
            let hsq = s.witness.hsq();
            out.push_str(&format!(
                "side,{},{},{},{},{},{}\n",
                s.id,
                s.surface.label(),
                s1.to_f64(),
                s2.to_f64(),
                rsq.to_f64().sqrt(),
                hsq.to_f64().sqrt()
            ));
        }
        for e in &self.edges {
            let (s1, s2, r, h) = e.witness.coords_srh(ctx);
            out.push_str(&format!(
                "edge,{},{}|{},{s1},{s2},{r},{h}\n",
                e.id, e.sides.0, e.sides.1
            ));
        }
        out
    }
}
