//! Acceptance suite: one test per criterion, each printing a PASS line with
//! its runtime (run with `--nocapture` to see them). Everything a criterion
//! asserts about the group is checked in exact arithmetic; stated runtime
//! budgets are asserted too. The criteria serialize on a lock so the
//! timings are honest under any `--test-threads` setting.

use std::sync::{Mutex, PoisonError};
use std::time::Instant;

static GATE: Mutex<()> = Mutex::new(());

fn serial() -> std::sync::MutexGuard<'static, ()> {
    GATE.lock().unwrap_or_else(PoisonError::into_inner)
}

use num_traits::{One, Signed};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hfd_core::domain::{
    enumerate_s1, in_f, satisfies_floor_conditions, FloorSet, Reducer,
};
use hfd_core::geometry::{
    apply, h1_row, norm_czd_pair, FloorRows, Point, RowEmbed, SRPoint,
};
use hfd_core::oracle;
use hfd_core::presentation::{
    build_presentation_with, decompose, eval_gen_word, GenTok, RunParams,
};
use hfd_core::ring::{FieldCtx, GroupElem, QuadInt};
use hfd_core::{ExactPoint, Int, KNum, Rat};

fn base_point(ctx: &FieldCtx) -> ExactPoint {
    SRPoint::from_i64(0, 0, 1, 2).to_point::<KNum>(ctx)
}

fn random_quad(rng: &mut ChaCha8Rng, ctx: &FieldCtx, bound: i64) -> QuadInt {
    QuadInt::from_i64(
        rng.gen_range(-bound..=bound),
        rng.gen_range(-bound..=bound),
        ctx.tag(),
    )
}

/// Largest lattice coordinate appearing in the floor set, the scale of the
/// enumeration box.
fn coeff_radius(floors: &FloorSet) -> i64 {
    floors
        .pairs
        .iter()
        .flat_map(|(c, d)| [&c.a, &c.b, &d.a, &d.b])
        .map(|v| v.abs())
        .max()
        .and_then(|v| i64::try_from(v).ok())
        .unwrap_or(4)
        .max(2)
}

#[test]
fn criterion_1_fundamental_units() {
    let _serial = serial();
    let t0 = Instant::now();
    for k in [2i64, 3, 5, 6, 7, 13, 17, 29] {
        let ctx = FieldCtx::new(k).unwrap();
        let brute = oracle::fundamental_unit_brute(k, 10_000_000)
            .unwrap_or_else(|| panic!("oracle found no unit for k = {k}"));
        assert_eq!(ctx.eps0, brute, "k = {k}");
    }
    let dt = t0.elapsed();
    assert!(dt.as_secs_f64() < 1.0, "runtime {dt:?} exceeds 1 s");
    println!("acceptance 1 (fundamental units vs Pell oracle): PASS ({dt:?})");
}

#[test]
fn criterion_2_s1_soundness() {
    let _serial = serial();
    let t0 = Instant::now();
    for k in [2i64, 5] {
        let ctx = FieldCtx::new_pid(k).unwrap();
        let floors = enumerate_s1(&ctx).unwrap();
        assert!(!floors.pairs.is_empty());
        // every emitted pair satisfies the conditions exactly
        for (c, d) in &floors.pairs {
            assert!(satisfies_floor_conditions(&ctx, c, d), "k={k}: ({c}, {d})");
            assert!(ctx.is_canonical_pair(c, d), "k={k}: ({c}, {d}) not canonical");
        }
        // random coprime pairs in a twice-larger box that are not
        // unit-equivalent to a member must fail at least one condition
        let radius = 2 * coeff_radius(&floors);
        let mut rng = ChaCha8Rng::seed_from_u64(20_000 + k as u64);
        let mut checked = 0;
        while checked < 1000 {
            let c = random_quad(&mut rng, &ctx, radius);
            let d = random_quad(&mut rng, &ctx, radius);
            if c.is_zero() || !ctx.is_coprime_pair(&c, &d) {
                continue;
            }
            let canon = ctx.canonical_pair(&c, &d).unwrap();
            if floors.pairs.contains(&canon) {
                continue;
            }
            checked += 1;
            assert!(
                !satisfies_floor_conditions(&ctx, &c, &d),
                "k={k}: ({c}, {d}) satisfies the conditions but is missing from the set"
            );
        }
    }
    let dt = t0.elapsed();
    assert!(dt.as_secs_f64() < 10.0, "runtime {dt:?} exceeds 10 s");
    println!("acceptance 2 (floor pair soundness): PASS ({dt:?})");
}

#[test]
fn criterion_3_floor_stability() {
    let _serial = serial();
    let t0 = Instant::now();
    for k in [2i64, 5] {
        let ctx = FieldCtx::new_pid(k).unwrap();
        let floors = enumerate_s1(&ctx).unwrap();
        let rows = floors.rows_f64(&ctx);
        // 100 extra random coprime pairs from a larger box
        let radius = 2 * coeff_radius(&floors);
        let mut rng = ChaCha8Rng::seed_from_u64(30_000 + k as u64);
        let mut extra: Vec<(QuadInt, QuadInt)> = Vec::new();
        while extra.len() < 100 {
            let c = random_quad(&mut rng, &ctx, radius);
            let d = random_quad(&mut rng, &ctx, radius);
            if c.is_zero() || !ctx.is_coprime_pair(&c, &d) {
                continue;
            }
            extra.push((c, d));
        }
        let extra_rows: Vec<RowEmbed<f64>> = extra
            .iter()
            .map(|(c, d)| RowEmbed::from_pair(&ctx, c, d))
            .collect();
        let eps = ctx.eps0_knum().to_f64();
        let lower = (ctx.k0 * ctx.k0) as f64 / (2.0 * ctx.k as f64);
        let n = 33;
        for i in 0..n {
            let s1 = -0.5 + (i as f64 + 0.5) / n as f64;
            for j in 0..n {
                let s2 = -0.5 + (j as f64 + 0.5) / n as f64;
                for l in 0..n {
                    let r = eps.powi(-2)
                        + (eps.powi(2) - eps.powi(-2)) * (l as f64 + 0.5) / n as f64;
                    let (x1, x2) = hfd_core::geometry::sr_to_x(&ctx, s1, s2);
                    let h0 = rows
                        .rows
                        .iter()
                        .filter_map(|row| h1_row(row, x1, x2, r))
                        .fold(0.0f64, f64::max);
                    let h0_extra = extra_rows
                        .iter()
                        .filter(|row| row.c1 != 0.0)
                        .filter_map(|row| h1_row(row, x1, x2, r))
                        .fold(h0, f64::max);
                    assert!(
                        (h0_extra - h0).abs() <= 1e-9,
                        "k={k}: extra pair raised the floor at ({s1}, {s2}, {r}): {h0} -> {h0_extra}"
                    );
                    assert!(h0 <= 1.0 + 1e-12, "k={k}: h0 = {h0} exceeds 1");
                    assert!(h0 > lower, "k={k}: h0 = {h0} not above {lower}");
                }
            }
        }
    }
    let dt = t0.elapsed();
    println!("acceptance 3 (floor stability and bounds on the 33^3 grid): PASS ({dt:?})");
}

fn random_word(
    rng: &mut ChaCha8Rng,
    gens: &[GroupElem],
    max_len: usize,
) -> (GroupElem, Vec<(usize, bool)>) {
    let len = rng.gen_range(1..=max_len);
    let mut g = GroupElem::identity();
    let mut letters = Vec::new();
    for _ in 0..len {
        let i = rng.gen_range(0..gens.len());
        let inv = rng.gen_bool(0.5);
        let f = if inv { gens[i].inv() } else { gens[i].clone() };
        g = g.mul(&f);
        letters.push((i, inv));
    }
    (g, letters)
}

#[test]
fn criterion_4_reduction_tiling() {
    let _serial = serial();
    let t0 = Instant::now();
    for k in [2i64, 5] {
        let ctx = FieldCtx::new_pid(k).unwrap();
        let floors = enumerate_s1(&ctx).unwrap();
        let reducer = Reducer::new(&ctx, &floors).unwrap();
        let z0 = base_point(&ctx);
        assert!(in_f(&ctx, &floors, &z0));
        let mut gens = vec![ctx.p1(), ctx.p2(), ctx.p3()];
        for i in 0..floors.pairs.len().min(6) {
            gens.push(reducer.completion(i).clone());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(40_000 + k as u64);
        for it in 0..1000 {
            let (w, _) = random_word(&mut rng, &gens, 20);
            let moved = apply(&ctx, &w, &z0);
            let out = reducer.reduce(&moved).unwrap();
            assert_eq!(out.reduced, z0, "k={k} it={it}: reduced point differs");
            assert!(
                out.gamma.mul(&w).is_identity(),
                "k={k} it={it}: gamma is not the inverse"
            );
            for (before, after) in &out.floor_heights {
                assert!(after > before, "k={k} it={it}: floor step did not increase height");
            }
        }
    }
    let dt = t0.elapsed();
    assert!(dt.as_secs_f64() < 60.0, "runtime {dt:?} exceeds 60 s");
    println!("acceptance 4 (reduction returns the base point exactly, 1000 words/field): PASS ({dt:?})");
}

#[test]
fn criterion_5_presentation_validity() {
    let _serial = serial();
    let t0 = Instant::now();
    for k in [2i64, 5] {
        let ctx = FieldCtx::new_pid(k).unwrap();
        let floors = enumerate_s1(&ctx).unwrap();
        let params = RunParams::default();
        assert_eq!(params.coverage_samples, 2000);
        assert_eq!(params.order_cap, 60);
        let pres = build_presentation_with(&ctx, &floors, &params).unwrap();
        // coverage certificate at 2000 samples
        assert_eq!(pres.coverage.samples, 2000, "k={k}");
        assert!(pres.coverage.ok, "k={k}: {} uncovered", pres.coverage.uncovered);
        // every pairing relator is exactly the identity in PSL2
        for (a, b) in &pres.pairing_relations {
            let g = pres.sides.sides[*a].gamma.mul(&pres.sides.sides[*b].gamma);
            assert!(g.is_identity(), "k={k}: pairing relation ({a}, {b})");
        }
        // every cycle relator verifies and no order exceeds the cap
        assert!(!pres.cycle_relations.is_empty(), "k={k}");
        for (word, m) in &pres.cycle_relations {
            assert!(*m <= 60, "k={k}: cycle order {m}");
            let mut g = GroupElem::identity();
            for _ in 0..*m {
                for s in word {
                    g = g.mul(&pres.sides.sides[*s].gamma);
                }
            }
            assert!(g.is_identity(), "k={k}: cycle relation {word:?}^{m}");
        }
        println!(
            "  k={k}: {} sides, {} edges, {} pairing + {} cycle relations",
            pres.sides.len(),
            pres.edges.len(),
            pres.pairing_relations.len(),
            pres.cycle_relations.len()
        );
    }
    let dt = t0.elapsed();
    assert!(dt.as_secs_f64() < 600.0, "runtime {dt:?} exceeds 10 min");
    println!("acceptance 5 (presentation relators all verify exactly): PASS ({dt:?})");
}

#[test]
fn criterion_6_generation() {
    let _serial = serial();
    let t0 = Instant::now();
    for k in [2i64, 5] {
        let ctx = FieldCtx::new_pid(k).unwrap();
        let floors = enumerate_s1(&ctx).unwrap();
        let reducer = Reducer::new(&ctx, &floors).unwrap();
        let mut gens: Vec<(GenTok, GroupElem)> = vec![
            (GenTok::P1, ctx.p1()),
            (GenTok::P2, ctx.p2()),
            (GenTok::P3, ctx.p3()),
        ];
        for i in 0..floors.pairs.len().min(5) {
            gens.push((GenTok::Floor(i), reducer.completion(i).clone()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(60_000 + k as u64);
        for it in 0..200 {
            let len = rng.gen_range(0..=12);
            let mut m = GroupElem::identity();
            for _ in 0..len {
                let i = rng.gen_range(0..gens.len());
                let inv = rng.gen_bool(0.5);
                let f = if inv { gens[i].1.inv() } else { gens[i].1.clone() };
                m = m.mul(&f);
            }
            let word = decompose(&ctx, &reducer, &m)
                .unwrap_or_else(|e| panic!("k={k} it={it}: {e}"));
            let eval = eval_gen_word(&ctx, &reducer, &word);
            assert_eq!(eval, m, "k={k} it={it}: word does not evaluate back");
        }
    }
    let dt = t0.elapsed();
    println!("acceptance 6 (decompose round-trips 200 products/field): PASS ({dt:?})");
}

#[test]
fn criterion_7_geometry_laws_exact() {
    let _serial = serial();
    let t0 = Instant::now();
    for k in [2i64, 5, 13] {
        let ctx = FieldCtx::new_pid(k).unwrap();
        let floors = enumerate_s1(&ctx).unwrap();
        let reducer = Reducer::new(&ctx, &floors).unwrap();
        let mut gens = vec![ctx.p1(), ctx.p2(), ctx.p3()];
        for i in 0..floors.pairs.len().min(4) {
            gens.push(reducer.completion(i).clone());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(70_000 + k as u64);
        let rat = |rng: &mut ChaCha8Rng, lo: i64, hi: i64, den: i64| {
            Rat::new(Int::from(rng.gen_range(lo..=hi)), Int::from(den))
        };
        for _ in 0..100 {
            let z = SRPoint::new(
                rat(&mut rng, -6, 6, 13),
                rat(&mut rng, -6, 6, 11),
                rat(&mut rng, 1, 40, 10),
                rat(&mut rng, 1, 40, 7),
            )
            .unwrap()
            .to_point::<KNum>(&ctx);
            let (g, _) = random_word(&mut rng, &gens, 4);
            let image = apply(&ctx, &g, &z);
            // height law: h(gZ)^2 |cZ+d|^2 = h(Z)^2, exactly
            let n = norm_czd_pair(&ctx, &g.c, &g.d, &z);
            assert_eq!(image.hsq() * n.clone() * n.clone(), z.hsq());
            // inversion law: |-c g(Z) + a| * |cZ + d| = 1, exactly
            let m = norm_czd_pair(&ctx, &(-&g.c), &g.a, &image);
            assert_eq!(m * n, KNum::one());
            // stabilizer law: upper-triangular elements preserve h and
            // scale r^2 by eps0^{8m}, exactly
            let mexp = rng.gen_range(-2i64..=2);
            let b = random_quad(&mut rng, &ctx, 3);
            let t = ctx.upper(mexp, &b);
            let timage = apply(&ctx, &t, &z);
            assert_eq!(timage.hsq(), z.hsq());
            assert_eq!(timage.rsq(), ctx.eps0_pow_knum(8 * mexp) * z.rsq());
            // unit invariance of the norm, exactly
            let u = ctx.eps0_pow(rng.gen_range(-2i64..=2));
            let c = random_quad(&mut rng, &ctx, 4);
            let d = random_quad(&mut rng, &ctx, 4);
            assert_eq!(
                norm_czd_pair(&ctx, &(&u * &c), &(&u * &d), &z),
                norm_czd_pair(&ctx, &c, &d, &z)
            );
            // associativity of the action, exactly
            let (g2, _) = random_word(&mut rng, &gens, 4);
            assert_eq!(
                apply(&ctx, &g.mul(&g2), &z),
                apply(&ctx, &g, &apply(&ctx, &g2, &z))
            );
        }
        // float and exact norms agree to 1e-9 relative on bounded inputs
        let rows = FloorRows::new(&ctx, &floors.pairs);
        for _ in 0..50 {
            let sr = SRPoint::new(
                rat(&mut rng, -6, 6, 13),
                rat(&mut rng, -6, 6, 11),
                rat(&mut rng, 1, 30, 10),
                rat(&mut rng, 1, 30, 7),
            )
            .unwrap();
            let ez: ExactPoint = sr.to_point(&ctx);
            let fz: Point<f64> = sr.to_point(&ctx);
            for (i, (c, d)) in floors.pairs.iter().enumerate().take(8) {
                let exact = norm_czd_pair(&ctx, c, d, &ez).to_f64();
                let float = hfd_core::geometry::norm_czd(&rows.rows[i], &fz);
                assert!(
                    (exact - float).abs() <= 1e-9 * (1.0 + exact.abs().max(float.abs())),
                    "float/exact disagree: {exact} vs {float}"
                );
            }
        }
    }
    let dt = t0.elapsed();
    println!("acceptance 7 (exact geometry laws, zero tolerance): PASS ({dt:?})");
}
