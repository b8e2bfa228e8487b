//! Command-line front end for the fundamental-domain pipeline.
//!
//! Subcommands mirror the pipeline stages: `field` prints the field data,
//! `s1` the floor pairs, `generators` the standard generating set,
//! `presentation` the verified presentation (text, JSON and a witness CSV),
//! `reduce` moves a point into the fundamental domain, `decompose` writes a
//! group element as a word in the generators, and `slice` dumps a grid of
//! floor heights for plotting.
//!
//! Exit codes: 0 ok, 2 argument/parse error, 3 unsupported field,
//! 4 pipeline failure.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use hfd_core::domain::{enumerate_s1, reduce, Reducer};
use hfd_core::geometry::{point_to_sr, s_coords, SRPoint};
use hfd_core::presentation::{
    build_presentation_with, decompose, gen_word_to_string, standard_generators, RunParams,
};
use hfd_core::ring::{FieldCtx, GroupElem, QuadInt};
use hfd_core::{Error, ExactPoint, Int, KNum, Rat};

#[derive(Parser, Debug)]
#[command(name = "hfd", version, about = "fundamental domains and presentations of Hilbert modular groups", max_term_width = 100)]
pub struct Cli {
    #[command(subcommand)]
    pub cmd: Cmd,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Square-free k > 1 of the real quadratic field.
    #[arg(long)]
    pub k: Option<i64>,
    /// Output path; stdout when absent. `presentation` writes
    /// `<out>.txt`, `<out>.json`, `<out>.csv`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Output format where a choice exists.
    #[arg(long, value_parser = ["text", "json", "csv"])]
    pub format: Option<String>,
    /// key=value configuration file; command-line flags win.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Newton tolerance for edge witnesses.
    #[arg(long)]
    pub newton_tol: Option<f64>,
    /// Witness cluster radius.
    #[arg(long)]
    pub cluster_tol: Option<f64>,
    #[arg(long)]
    pub q_max: Option<i64>,
    #[arg(long)]
    pub m_max: Option<i64>,
    #[arg(long)]
    pub b_max: Option<i64>,
    #[arg(long)]
    pub order_cap: Option<u32>,
    #[arg(long)]
    pub reduce_cap: Option<usize>,
    /// Grid resolution per axis for scans.
    #[arg(long)]
    pub grid: Option<usize>,
    /// RNG seed for the coverage certificate.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
pub enum Cmd {
    /// Print k, k0, w and the fundamental unit.
    Field(Common),
    /// Enumerate the floor pairs (canonical coprime (c, d)).
    S1(Common),
    /// The standard generators P1, P2, P3 and one completion per pair.
    Generators(Common),
    /// Sides, edges, cycles and the verified presentation.
    Presentation(Common),
    /// Reduce a point `--point s1,s2,r,h` (rationals) into the domain.
    Reduce {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        point: String,
    },
    /// Decompose a matrix `--matrix "a1,a2;b1,b2;c1,c2;d1,d2"` (entries
    /// `x + y*w` as `x,y`) into a generator word.
    Decompose {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        matrix: String,
    },
    /// CSV grid of floor heights on the slice `r = const`.
    Slice {
        #[command(flatten)]
        common: Common,
        /// Ratio coordinate of the slice; must lie in [eps0^-2, eps0^2].
        #[arg(long)]
        r: f64,
    },
}

/// Resolved configuration after merging file and flags.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub k: i64,
    pub params: RunParams,
    pub grid: usize,
    pub format: String,
    pub out: Option<PathBuf>,
}

fn parse_config_file(path: &PathBuf) -> Result<Vec<(String, String)>, Error> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Pipeline(format!("cannot read config {path:?}: {e}")))?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Pipeline(format!(
                "config line {} is not key=value: {line}",
                lineno + 1
            )));
        };
        out.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(out)
}

impl Common {
    pub fn resolve(&self) -> Result<RunConfig, Error> {
        let mut file: std::collections::HashMap<String, String> = Default::default();
        if let Some(path) = &self.config {
            for (k, v) in parse_config_file(path)? {
                file.insert(k, v);
            }
        }
        let get = |key: &str| file.get(key).cloned();
        let parse_num = |key: &str, v: String| {
            v.parse::<f64>()
                .map_err(|_| Error::Pipeline(format!("config {key} = {v} is not a number")))
        };
        let mut params = RunParams::default();
        let k = match self.k {
            Some(k) => k,
            None => get("k")
                .ok_or_else(|| Error::Pipeline("no field given: pass --k or set k in the config".into()))?
                .parse::<i64>()
                .map_err(|_| Error::Pipeline("config k is not an integer".into()))?,
        };
        if let Some(v) = self.newton_tol.or(get("newton_tol").map(|v| parse_num("newton_tol", v)).transpose()?) {
            params.newton_tol = v;
        }
        if let Some(v) = self.cluster_tol.or(get("cluster_tol").map(|v| parse_num("cluster_tol", v)).transpose()?) {
            params.cluster_tol = v;
        }
        if let Some(v) = self.q_max.or(get("q_max").and_then(|v| v.parse().ok())) {
            params.q_max = v;
        }
        if let Some(v) = self.m_max.or(get("m_max").and_then(|v| v.parse().ok())) {
            params.m_max = v;
        }
        if let Some(v) = self.b_max.or(get("b_max").and_then(|v| v.parse().ok())) {
            params.b_max = v;
        }
        if let Some(v) = self.order_cap.or(get("order_cap").and_then(|v| v.parse().ok())) {
            params.order_cap = v;
        }
        if let Some(v) = self.reduce_cap.or(get("reduce_cap").and_then(|v| v.parse().ok())) {
            params.reduce_cap = v;
        }
        if let Some(v) = self.seed.or(get("seed").and_then(|v| v.parse().ok())) {
            params.seed = v;
        }
        let grid = self.grid.or(get("grid").and_then(|v| v.parse().ok())).unwrap_or(33);
        if params.newton_tol <= 0.0 || params.cluster_tol <= 0.0 {
            return Err(Error::Pipeline("tolerances must be positive".into()));
        }
        if params.order_cap < 1 || params.reduce_cap < 1 || grid < 1 {
            return Err(Error::Pipeline("caps and grid sizes must be at least 1".into()));
        }
        let format = self
            .format
            .clone()
            .or(get("format"))
            .unwrap_or_else(|| "text".into());
        let out = self.out.clone().or(get("out").map(PathBuf::from));
        Ok(RunConfig {
            k,
            params,
            grid,
            format,
            out,
        })
    }
}

/// Parse, also accepting decimals, into an exact rational.
pub fn parse_rat(s: &str) -> Result<Rat, Error> {
    let s = s.trim();
    let bad = || Error::Pipeline(format!("cannot parse rational: {s}"));
    if let Some((n, d)) = s.split_once('/') {
        let n: Int = n.trim().parse().map_err(|_| bad())?;
        let d: Int = d.trim().parse().map_err(|_| bad())?;
        if d == Int::from(0) {
            return Err(bad());
        }
        return Ok(Rat::new(n, d));
    }
    if let Some((whole, frac)) = s.split_once('.') {
        let neg = whole.trim_start().starts_with('-');
        let w: Int = if whole.is_empty() || whole == "-" {
            Int::from(0)
        } else {
            whole.parse().map_err(|_| bad())?
        };
        let digits = frac.len() as u32;
        let f: Int = if frac.is_empty() {
            Int::from(0)
        } else {
            frac.parse().map_err(|_| bad())?
        };
        let scale = Int::from(10).pow(digits);
        let mag = w.magnitude().clone() * scale.magnitude().clone() + f.magnitude().clone();
        let num = Int::from_biguint(
            if neg {
                num_bigint::Sign::Minus
            } else {
                num_bigint::Sign::Plus
            },
            mag,
        );
        return Ok(Rat::new(num, scale));
    }
    let n: Int = s.parse().map_err(|_| bad())?;
    Ok(Rat::from_integer(n))
}

fn parse_point(ctx: &FieldCtx, s: &str) -> Result<ExactPoint, Error> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 4 {
        return Err(Error::Pipeline(format!(
            "--point needs four comma-separated rationals s1,s2,r,h, got {s}"
        )));
    }
    let vals: Vec<Rat> = parts
        .iter()
        .map(|p| parse_rat(p))
        .collect::<Result<_, _>>()?;
    let sr = SRPoint::new(vals[0].clone(), vals[1].clone(), vals[2].clone(), vals[3].clone())?;
    Ok(sr.to_point::<KNum>(ctx))
}

fn parse_matrix(ctx: &FieldCtx, s: &str) -> Result<GroupElem, Error> {
    let rows: Vec<&str> = s.split(';').collect();
    if rows.len() != 4 {
        return Err(Error::Pipeline(
            "--matrix needs four entries a;b;c;d, each as x,y for x + y*w".into(),
        ));
    }
    let mut entries = Vec::new();
    for r in rows {
        let parts: Vec<&str> = r.split(',').collect();
        if parts.len() != 2 {
            return Err(Error::Pipeline(format!("matrix entry {r} is not x,y")));
        }
        let x: i64 = parts[0]
            .trim()
            .parse()
            .map_err(|_| Error::Pipeline(format!("bad integer {}", parts[0])))?;
        let y: i64 = parts[1]
            .trim()
            .parse()
            .map_err(|_| Error::Pipeline(format!("bad integer {}", parts[1])))?;
        entries.push(QuadInt::from_i64(x, y, ctx.tag()));
    }
    let [a, b, c, d] = <[QuadInt; 4]>::try_from(entries).unwrap();
    GroupElem::new(a, b, c, d)
        .map_err(|_| Error::Pipeline("matrix determinant is not 1".into()))
}

fn emit(out: &Option<PathBuf>, content: &str) -> Result<(), Error> {
    match out {
        Some(path) => fs::write(path, content)
            .map_err(|e| Error::Pipeline(format!("cannot write {path:?}: {e}"))),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn point_report(ctx: &FieldCtx, p: &ExactPoint) -> String {
    match point_to_sr(ctx, p) {
        Some(sr) => format!("(s1, s2, r, h) = ({}, {}, {}, {})", sr.s1, sr.s2, sr.r, sr.h),
        None => {
            let (s1, s2) = s_coords(ctx, p);
            format!(
                "x1 = {}, x2 = {}, y1^2 = {}, y2^2 = {}  (s1 = {}, s2 = {})",
                p.x1, p.x2, p.y1sq, p.y2sq, s1, s2
            )
        }
    }
}

/// Honors `HFD_THREADS` as an upper bound on worker threads. The pipeline
/// runs single-threaded, which satisfies any positive cap.
fn thread_cap() -> Result<usize, Error> {
    match std::env::var("HFD_THREADS") {
        Ok(v) => v
            .parse::<usize>()
            .ok()
            .filter(|n| *n >= 1)
            .ok_or_else(|| Error::Pipeline(format!("HFD_THREADS must be a positive integer, got {v}"))),
        Err(_) => Ok(usize::MAX),
    }
}

pub fn run(cli: Cli) -> Result<(), Error> {
    let _cap = thread_cap()?;
    match cli.cmd {
        Cmd::Field(common) => {
            let cfg = common.resolve()?;
            let ctx = FieldCtx::new(cfg.k)?;
            let mut s = String::new();
            let _ = writeln!(s, "k = {}", ctx.k);
            let _ = writeln!(s, "k0 = {}", ctx.k0);
            let _ = writeln!(s, "w = (1 + sqrt {}) / {}", ctx.k, ctx.k0);
            let _ = writeln!(
                s,
                "eps0 = {}  (~ {:.12})",
                ctx.eps0,
                ctx.eps0_knum().to_f64()
            );
            let _ = writeln!(s, "N(eps0) = {}", ctx.eps0.norm());
            let _ = writeln!(
                s,
                "class number one: {}",
                if FieldCtx::new_pid(cfg.k).is_ok() { "yes (supported)" } else { "unknown/no (pipeline stages unavailable)" }
            );
            emit(&cfg.out, &s)
        }
        Cmd::S1(common) => {
            let cfg = common.resolve()?;
            let ctx = FieldCtx::new_pid(cfg.k)?;
            let floors = enumerate_s1(&ctx)?;
            let content = match cfg.format.as_str() {
                "json" => serde_json::to_string_pretty(&floors.to_json(&ctx)).unwrap() + "\n",
                _ => {
                    let mut s = format!("floor pairs for k = {} ({} total)\n", cfg.k, floors.pairs.len());
                    for (c, d) in &floors.pairs {
                        let _ = writeln!(s, "  c = {c}, d = {d}   N(c) = {}", c.norm());
                    }
                    s
                }
            };
            emit(&cfg.out, &content)
        }
        Cmd::Generators(common) => {
            let cfg = common.resolve()?;
            let ctx = FieldCtx::new_pid(cfg.k)?;
            let floors = enumerate_s1(&ctx)?;
            let names = standard_generators(&ctx, &floors)?;
            let content = match cfg.format.as_str() {
                "json" => {
                    let quad = |x: &QuadInt| json!([x.a.to_string(), x.b.to_string()]);
                    let v = json!({
                        "k": cfg.k,
                        "generators": names.iter().map(|(n, g)| json!({
                            "name": n,
                            "matrix": [[quad(&g.a), quad(&g.b)], [quad(&g.c), quad(&g.d)]],
                        })).collect::<Vec<_>>(),
                    });
                    serde_json::to_string_pretty(&v).unwrap() + "\n"
                }
                _ => {
                    let mut s = format!("generators for k = {}\n", cfg.k);
                    for (n, g) in &names {
                        let _ = writeln!(s, "  {n} = {g}");
                    }
                    s
                }
            };
            emit(&cfg.out, &content)
        }
        Cmd::Presentation(common) => {
            let cfg = common.resolve()?;
            let ctx = FieldCtx::new_pid(cfg.k)?;
            let floors = enumerate_s1(&ctx)?;
            let pres = build_presentation_with(&ctx, &floors, &cfg.params)?;
            let text = pres.to_text(&ctx);
            let jsonv = serde_json::to_string_pretty(&pres.to_json(&ctx)).unwrap() + "\n";
            let csv = pres.witnesses_csv(&ctx);
            match &cfg.out {
                Some(base) => {
                    let write = |ext: &str, content: &str| {
                        let mut p = base.clone();
                        p.set_extension(ext);
                        fs::write(&p, content)
                            .map_err(|e| Error::Pipeline(format!("cannot write {p:?}: {e}")))
                    };
                    write("txt", &text)?;
                    write("json", &jsonv)?;
                    write("csv", &csv)?;
                    println!(
                        "wrote {}.txt/.json/.csv: {} sides, {} edges, {} cycle relations (all verified)",
                        base.display(),
                        pres.sides.len(),
                        pres.edges.len(),
                        pres.cycle_relations.len()
                    );
                    Ok(())
                }
                None => {
                    let content = match cfg.format.as_str() {
                        "json" => jsonv,
                        "csv" => csv,
                        _ => text,
                    };
                    emit(&None, &content)
                }
            }
        }
        Cmd::Reduce { common, point } => {
            let cfg = common.resolve()?;
            let ctx = FieldCtx::new_pid(cfg.k)?;
            let floors = enumerate_s1(&ctx)?;
            let z = parse_point(&ctx, &point)?;
            let out = reduce(&ctx, &floors, &z, cfg.params.reduce_cap)?;
            let mut s = String::new();
            let _ = writeln!(s, "input:   {}", point_report(&ctx, &z));
            let _ = writeln!(s, "reduced: {}", point_report(&ctx, &out.reduced));
            let _ = writeln!(s, "gamma = {}", out.gamma);
            let _ = writeln!(s, "floor steps: {}", out.floor_heights.len());
            let _ = writeln!(s, "verified: reduced point lies in F, heights strictly increased");
            emit(&cfg.out, &s)
        }
        Cmd::Decompose { common, matrix } => {
            let cfg = common.resolve()?;
            let ctx = FieldCtx::new_pid(cfg.k)?;
            let floors = enumerate_s1(&ctx)?;
            let reducer = Reducer::new(&ctx, &floors)?;
            let m = parse_matrix(&ctx, &matrix)?;
            let word = decompose(&ctx, &reducer, &m)?;
            let mut s = String::new();
            let _ = writeln!(s, "matrix = {m}");
            let _ = writeln!(s, "word   = {}", gen_word_to_string(&floors, &word));
            let _ = writeln!(s, "verified: word evaluates to the matrix up to sign");
            emit(&cfg.out, &s)
        }
        Cmd::Slice { common, r } => {
            let cfg = common.resolve()?;
            let ctx = FieldCtx::new_pid(cfg.k)?;
            let floors = enumerate_s1(&ctx)?;
            let eps = ctx.eps0_knum().to_f64();
            if !(eps.powi(-2)..=eps.powi(2)).contains(&r) {
                return Err(Error::Pipeline(format!(
                    "r = {r} outside [eps0^-2, eps0^2] = [{:.6}, {:.6}]",
                    eps.powi(-2),
                    eps.powi(2)
                )));
            }
            let n = cfg.grid;
            let mut s = String::from("s1,s2,h0\n");
            for i in 0..n {
                let s1 = -0.5 + (i as f64 + 0.5) / n as f64;
                for j in 0..n {
                    let s2 = -0.5 + (j as f64 + 0.5) / n as f64;
                    let h0 = hfd_core::domain::floor_height(&ctx, &floors, s1, s2, r);
                    let _ = writeln!(s, "{s1},{s2},{h0}");
                }
            }
            emit(&cfg.out, &s)
        }
    }
}

/// Map an error to the documented exit code.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidField(_) | Error::UnsupportedField(_) => 3,
        _ => 4,
    }
}
