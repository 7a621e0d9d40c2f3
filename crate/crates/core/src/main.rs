use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_rational::BigRational;
use serde_json::{json, Map, Value};

use motivic_vitushkin::dsl::{cellset_from_text, CellSet};
use motivic_vitushkin::error::{MvError, Result};
use motivic_vitushkin::groth::CVal;
use motivic_vitushkin::k::Field;
use motivic_vitushkin::measure::{
    crofton_constant, crofton_constant_at, gl_measure, grassmann_transverse_measure, measure, poincare_series,
    tube_measure,
};
use motivic_vitushkin::mot_ring::{parse_mot, rat_to_f64};
use motivic_vitushkin::preorder::{check_witness, specialize_witness, Witness};
use motivic_vitushkin::riso;
use motivic_vitushkin::series::{Ball, Ls};
use motivic_vitushkin::specialize::{count_measure, count_tube, residue_matrix_counts, Estimate};
use motivic_vitushkin::tensor::{agreement, lemma_check, Ctx};
use motivic_vitushkin::vitushkin::{self, CheckReport};

#[derive(Parser)]
#[command(name = "mv", version, about = "Motivic measures, riso-triviality and Vitushkin variations over k((t))")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
    #[command(flatten)]
    cfg: RunConfig,
}

#[derive(Args, Clone)]
struct RunConfig {
    /// residue field: Q or F<q> (a `field` header in the input wins)
    #[arg(long, global = true)]
    field: Option<String>,
    /// truncation depth m for sampling and counting
    #[arg(long, global = true, default_value_t = 6)]
    depth: u32,
    #[arg(long, global = true, default_value_t = 100_000)]
    samples: u64,
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    #[arg(long, global = true, default_value_t = 0.05)]
    tol: f64,
    /// inclusive radius range, e.g. 0..5
    #[arg(long = "r-range", global = true, default_value = "0..5")]
    r_range: String,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// read the input from a file instead of the argument
    #[arg(long, global = true)]
    file: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum, PartialEq)]
enum Format {
    Json,
    Text,
}

#[derive(Subcommand)]
enum Verb {
    /// mu_d of a set (d defaults to its dimension)
    Measure {
        input: Option<String>,
        #[arg(long)]
        dim: Option<usize>,
    },
    /// Poincare series of the tubes and their first coefficients
    TubeSeries {
        input: Option<String>,
        #[arg(long, default_value_t = 5)]
        terms: i64,
    },
    /// minimal non-riso-trivial balls and singletons; with --ball, the triviality space
    Riso {
        input: Option<String>,
        /// ball as `c1,c2:radius`
        #[arg(long)]
        ball: Option<String>,
    },
    /// V_0(X) or V_0(X, B)
    V0 {
        input: Option<String>,
        #[arg(long)]
        ball: Option<String>,
    },
    /// V_i(X): exact on the linear class over Q, sampled over F_q
    Vitushkin {
        input: Option<String>,
        #[arg(long, default_value_t = 1)]
        i: usize,
        #[arg(long)]
        ball: Option<String>,
    },
    CroftonCheck {
        input: Option<String>,
    },
    EntropyCheck {
        input: Option<String>,
    },
    SumvarCheck {
        input: Option<String>,
        #[arg(long, default_value = "0,0:0")]
        ball: String,
    },
    /// integral of V_i(X, B(x, L^-r)) against V_i(X)
    IntegralCheck {
        input: Option<String>,
        #[arg(long, default_value_t = 0)]
        i: usize,
        #[arg(long, default_value_t = 1)]
        r: i64,
    },
    /// V_1(tX) / V_1(X) with paired seeds, and the exact linear identity
    HomogeneityCheck {
        input: Option<String>,
    },
    /// verify a witness {"F": value, "witness": {"Y", "Z", "f", "phi"}}
    PreorderCheck {
        input: Option<String>,
        /// also count points at q = |k|
        #[arg(long)]
        specialize: bool,
    },
    /// normal form vs bounded search, and the (*) lemma harness
    TensorCheck {
        #[arg(long, default_value_t = 500)]
        pairs: u64,
        #[arg(long, default_value_t = 100)]
        instances: u64,
    },
    /// counting oracles and group measures at q = |k|
    Specialize {
        #[arg(long, value_enum)]
        what: What,
        input: Option<String>,
        #[arg(long)]
        r: Option<i64>,
        #[arg(long, default_value_t = 2)]
        n: u32,
        #[arg(long, default_value_t = 1)]
        d: u32,
    },
    /// decide nonnegativity of an element of A, e.g. "(1 - L^-1)^3"
    Nonneg {
        expr: String,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum What {
    CountMeasure,
    CountTube,
    Gl,
    Grassmann,
    CroftonConstant,
}

struct Outcome {
    result: Value,
    verdict: Option<bool>,
}

fn ok(result: Value) -> Result<Outcome> {
    Ok(Outcome { result, verdict: None })
}

fn judged(result: Value, verdict: bool) -> Result<Outcome> {
    Ok(Outcome { result, verdict: Some(verdict) })
}

fn text_of(input: &Option<String>, cfg: &RunConfig) -> Result<String> {
    match (&cfg.file, input) {
        (Some(p), _) => std::fs::read_to_string(p).map_err(|e| MvError::Usage(format!("{}: {e}", p.display()))),
        (None, Some(s)) => Ok(s.clone()),
        (None, None) => Err(MvError::Usage("no input: pass a set description or --file".into())),
    }
}

fn field_of(cfg: &RunConfig) -> Result<Option<Field>> {
    cfg.field.as_deref().map(Field::parse).transpose()
}

fn set_of(input: &Option<String>, cfg: &RunConfig) -> Result<CellSet> {
    cellset_from_text(&text_of(input, cfg)?, field_of(cfg)?)
}

fn ball_of(s: &str, k: Field, n: usize) -> Result<Ball> {
    let (c, r) = s.split_once(':').ok_or_else(|| MvError::Usage(format!("ball '{s}' is not c1,..,cn:radius")))?;
    let center = c.split(',').map(|x| Ls::parse(x, k)).collect::<Result<Vec<_>>>()?;
    if center.len() != n {
        return Err(MvError::Usage(format!("ball '{s}' has {} coordinates, set lives in K^{n}", center.len())));
    }
    let rad = r.trim().parse().map_err(|_| MvError::Usage(format!("bad radius in '{s}'")))?;
    Ok(Ball::new(center, rad))
}

fn r_range(s: &str) -> Result<std::ops::RangeInclusive<i64>> {
    let bad = || MvError::Usage(format!("bad --r-range '{s}' (expected a..b)"));
    let (a, b) = s.split_once("..").ok_or_else(bad)?;
    let b = b.trim_start_matches('=');
    Ok(a.trim().parse().map_err(|_| bad())?..=b.trim().parse().map_err(|_| bad())?)
}

fn rat_json(r: &BigRational) -> Value {
    json!({ "exact": r.to_string(), "value": rat_to_f64(r) })
}

fn est_json(e: &Estimate) -> Value {
    json!({
        "value": rat_to_f64(&e.value),
        "exact_mean": e.value.to_string(),
        "half_width": e.half_width,
        "samples": e.samples,
        "confidence": e.confidence,
    })
}

fn cval_json(v: &CVal) -> Value {
    json!({ "display": v.to_string(), "terms": v.to_json() })
}

fn report(r: CheckReport) -> Result<Outcome> {
    let v = r.verdict;
    judged(r.to_json(), v)
}

fn q_of(k: Field) -> Result<u32> {
    if k.is_finite() {
        Ok(k.q())
    } else {
        Err(MvError::BaseFieldMismatch("Q".into()))
    }
}

fn run(verb: &Verb, cfg: &RunConfig) -> Result<Outcome> {
    match verb {
        Verb::Measure { input, dim } => {
            let c = set_of(input, cfg)?;
            let v = measure(&c, *dim)?;
            let mut out = json!({ "dim": dim.unwrap_or(c.dim()), "measure": cval_json(&v) });
            if c.field.is_finite() {
                out["at_q"] = rat_json(&v.count_points(c.field.q())?);
            }
            ok(out)
        }
        Verb::TubeSeries { input, terms } => {
            let c = set_of(input, cfg)?;
            let tube = tube_measure(&c)?;
            let series = poincare_series(&c)?;
            let coeffs: Vec<Value> = (0..=*terms).map(|r| json!({ "r": r, "measure": tube.eval1(r).to_string() })).collect();
            ok(json!({ "series": series.to_string(), "coefficients": coeffs }))
        }
        Verb::Riso { input, ball } => {
            let c = set_of(input, cfg)?;
            match ball {
                Some(b) => {
                    let b = ball_of(b, c.field, c.n)?;
                    let r = riso::rtsp(&c, &b)?;
                    let basis: Vec<Vec<String>> = r.basis.iter().map(|v| v.iter().map(|x| x.to_string()).collect()).collect();
                    ok(json!({ "rtsp": { "dim": r.dim(), "basis": basis, "certified": r.certified } }))
                }
                None => {
                    let rep = riso::min_nonrisotrivial(&c)?;
                    ok(json!({ "items": rep.to_json()["items"], "v0": cval_json(&rep.s0_class) }))
                }
            }
        }
        Verb::V0 { input, ball } => {
            let c = set_of(input, cfg)?;
            let v = match ball {
                Some(b) => riso::v0_rel(&c, &ball_of(b, c.field, c.n)?)?,
                None => riso::v0(&c)?,
            };
            ok(json!({ "v0": cval_json(&v) }))
        }
        Verb::Vitushkin { input, i, ball } => {
            let c = set_of(input, cfg)?;
            if !c.field.is_finite() {
                let v = if *i == c.dim() {
                    vitushkin::v_d_linear(&c)?
                } else if *i == 0 {
                    riso::v0(&c)?
                } else if *i > c.dim() {
                    CVal::zero()
                } else {
                    return Err(MvError::BaseFieldMismatch("Q (sampled variations)".into()));
                };
                return ok(json!({ "i": i, "mode": "symbolic", "value": cval_json(&v) }));
            }
            let e = match ball {
                Some(b) => vitushkin::v_i_rel_estimate(&c, &ball_of(b, c.field, c.n)?, *i, cfg.depth, cfg.samples, cfg.seed)?,
                None => vitushkin::v_i_estimate(&c, *i, cfg.depth, cfg.samples, cfg.seed)?,
            };
            ok(json!({ "i": i, "mode": "specialized", "estimate": est_json(&e) }))
        }
        Verb::CroftonCheck { input } => {
            let c = set_of(input, cfg)?;
            let mut r = vitushkin::check_crofton(&c, cfg.depth, cfg.samples, cfg.seed, cfg.tol)?;
            // independent check of the constant itself
            let q = q_of(c.field)?;
            let sym = crofton_constant(2, 1)?.eval_int(q as u64)?;
            let mc = crofton_constant_at(2, 1, q, cfg.depth, cfg.samples, cfg.seed ^ 0x5eed)?;
            let agrees = (mc.value_f64() - rat_to_f64(&sym)).abs() <= mc.half_width;
            r.rows.push(json!({ "crofton_constant": rat_json(&sym), "crofton_constant_sampled": est_json(&mc), "agrees": agrees }));
            r.verdict &= agrees;
            report(r)
        }
        Verb::EntropyCheck { input } => {
            let c = set_of(input, cfg)?;
            report(vitushkin::check_entropy(&c, r_range(&cfg.r_range)?, cfg.depth, cfg.samples, cfg.seed)?)
        }
        Verb::SumvarCheck { input, ball } => {
            let c = set_of(input, cfg)?;
            let b = ball_of(ball, c.field, c.n)?;
            report(vitushkin::check_sum_variations(&c, &b, cfg.depth, cfg.samples, cfg.seed)?)
        }
        Verb::IntegralCheck { input, i, r } => {
            let c = set_of(input, cfg)?;
            report(vitushkin::check_vi_integral_bound(&c, *i, *r, cfg.depth, cfg.samples, cfg.seed)?)
        }
        Verb::HomogeneityCheck { input } => {
            let c = set_of(input, cfg)?;
            let linear = vitushkin::homogeneity_linear(&c).ok();
            let h = vitushkin::homogeneity(&c, cfg.depth, cfg.samples, cfg.seed)?;
            let rel = (h.ratio / h.target - 1.0).abs();
            let verdict = rel <= cfg.tol && linear != Some(false);
            judged(
                json!({
                    "base": est_json(&h.base),
                    "scaled": est_json(&h.scaled),
                    "ratio": h.ratio,
                    "target": h.target,
                    "relative_error": rel,
                    "tolerance": cfg.tol,
                    "exact_linear_identity": linear,
                }),
                verdict,
            )
        }
        Verb::PreorderCheck { input, specialize } => {
            let text = text_of(input, cfg)?;
            let doc: Value = serde_json::from_str(&text).map_err(|e| MvError::Usage(format!("witness JSON: {e}")))?;
            let k = field_of(cfg)?.unwrap_or(Field::Q);
            let w = Witness::from_json(doc.get("witness").ok_or_else(|| MvError::Usage("missing \"witness\"".into()))?, k)?;
            let f = CVal::from_json(doc.get("F").ok_or_else(|| MvError::Usage("missing \"F\"".into()))?, w.field)?;
            let verdict = check_witness(&f, &w)?;
            let mut out = json!({ "F": cval_json(&f), "witnessed_value": cval_json(&w.value()?), "verifies": verdict });
            if *specialize && verdict {
                out["count"] = rat_json(&specialize_witness(&f, &w)?);
            }
            judged(out, verdict)
        }
        Verb::TensorCheck { pairs, instances } => {
            let a = agreement::<u64>(&Ctx { r1: 2, r2: 1, bound: 3 }, *pairs, 2, cfg.seed);
            let ctx = Ctx { r1: 2, r2: 2, bound: 3 };
            let lemma = lemma_check::<u64>(&ctx, &[vec![0, 1]], &[], *instances, cfg.seed)?;
            let even = lemma_check::<u64>(&Ctx { r1: 1, r2: 1, bound: 3 }, &[vec![2]], &[], *instances, cfg.seed);
            let rejected = matches!(even, Err(MvError::HypothesisFailed(_)));
            let verdict = a.disagreements == 0 && lemma.holds() && rejected;
            judged(
                json!({
                    "agreement": { "pairs": a.pairs, "search_yes": a.search_yes, "normal_form_equal": a.nf_equal, "disagreements": a.disagreements },
                    "lemma": lemma.to_json(),
                    "even_naturals_rejected": rejected,
                }),
                verdict,
            )
        }
        Verb::Specialize { what, input, r, n, d } => {
            let k = field_of(cfg)?.unwrap_or(Field::Q);
            match what {
                What::CountMeasure => {
                    let c = set_of(input, cfg)?;
                    let v = count_measure(&c, cfg.depth)?;
                    let sym = measure(&c, None)?.count_points(q_of(c.field)?)?;
                    judged(json!({ "count": rat_json(&v), "symbolic": rat_json(&sym) }), v == sym)
                }
                What::CountTube => {
                    let c = set_of(input, cfg)?;
                    let r = r.ok_or_else(|| MvError::Usage("--r is required".into()))?;
                    let v = count_tube(&c, r, cfg.depth)?;
                    let sym = tube_measure(&c)?.eval1(r).count_points(q_of(c.field)?)?;
                    judged(json!({ "r": r, "count": rat_json(&v), "symbolic": rat_json(&sym) }), v == sym)
                }
                What::Gl | What::Grassmann => {
                    let q = q_of(k)?;
                    let dd = if matches!(what, What::Gl) { *n } else { *d };
                    let sym = if matches!(what, What::Gl) { gl_measure(*n) } else { grassmann_transverse_measure(*n, *d)? };
                    let (gl, tr) = residue_matrix_counts(*n as usize, dd as usize, q)?;
                    let hits = if matches!(what, What::Gl) { gl } else { tr };
                    let count = BigRational::new(hits.into(), num_bigint::BigInt::from(q).pow(n * n));
                    let at = sym.eval_int(q as u64)?;
                    judged(json!({ "symbolic": sym.to_string(), "at_q": rat_json(&at), "count": rat_json(&count) }), at == count)
                }
                What::CroftonConstant => {
                    let q = q_of(k)?;
                    let sym = crofton_constant(*n, *d)?;
                    let at = sym.eval_int(q as u64)?;
                    let e = crofton_constant_at(*n, *d, q, cfg.depth, cfg.samples, cfg.seed)?;
                    let agrees = (e.value_f64() - rat_to_f64(&at)).abs() <= e.half_width;
                    judged(json!({ "symbolic": sym.to_string(), "at_q": rat_json(&at), "sampled": est_json(&e) }), agrees)
                }
            }
        }
        Verb::Nonneg { expr } => {
            let m = parse_mot(expr)?;
            let w = m.negativity_witness();
            let nonneg = w.is_none();
            judged(json!({ "element": m.to_string(), "nonneg": nonneg, "witness": w.map(|x| x.to_string()) }), nonneg)
        }
    }
}

fn verb_name(v: &Verb) -> &'static str {
    match v {
        Verb::Measure { .. } => "measure",
        Verb::TubeSeries { .. } => "tube-series",
        Verb::Riso { .. } => "riso",
        Verb::V0 { .. } => "v0",
        Verb::Vitushkin { .. } => "vitushkin",
        Verb::CroftonCheck { .. } => "crofton-check",
        Verb::EntropyCheck { .. } => "entropy-check",
        Verb::SumvarCheck { .. } => "sumvar-check",
        Verb::IntegralCheck { .. } => "integral-check",
        Verb::HomogeneityCheck { .. } => "homogeneity-check",
        Verb::PreorderCheck { .. } => "preorder-check",
        Verb::TensorCheck { .. } => "tensor-check",
        Verb::Specialize { .. } => "specialize",
        Verb::Nonneg { .. } => "nonneg",
    }
}

fn exit_code(e: &MvError) -> u8 {
    match e {
        MvError::Unsupported(_)
        | MvError::DepthExceeded(_)
        | MvError::UnsupportedRamification(_)
        | MvError::Uncertified
        | MvError::PrecisionLoss
        | MvError::Inconclusive(_) => 3,
        MvError::HypothesisFailed(_) => 1,
        _ => 2,
    }
}

/// Indented `key: value` lines of the JSON body.
fn render_text(v: &Value, indent: usize, out: &mut String) {
    let pad = "  ".repeat(indent);
    match v {
        Value::Object(m) => {
            for (k, x) in m {
                if x.is_object() || x.is_array() {
                    out.push_str(&format!("{pad}{k}:\n"));
                    render_text(x, indent + 1, out);
                } else {
                    out.push_str(&format!("{pad}{k}: {}\n", scalar(x)));
                }
            }
        }
        Value::Array(a) => {
            for x in a {
                if x.is_object() || x.is_array() {
                    out.push_str(&format!("{pad}-\n"));
                    render_text(x, indent + 1, out);
                } else {
                    out.push_str(&format!("{pad}- {}\n", scalar(x)));
                }
            }
        }
        x => out.push_str(&format!("{pad}{}\n", scalar(x))),
    }
}

fn scalar(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        x => x.to_string(),
    }
}

fn emit(body: Value, format: Format) {
    match format {
        Format::Json => println!("{}", serde_json::to_string_pretty(&body).expect("json")),
        Format::Text => {
            let mut s = String::new();
            render_text(&body, 0, &mut s);
            print!("{s}");
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let body = json!({ "schema": 1, "error": { "kind": "UsageError", "message": e.to_string() } });
            println!("{}", serde_json::to_string_pretty(&body).expect("json"));
            return ExitCode::from(2);
        }
    };
    let mut body = Map::new();
    body.insert("schema".into(), json!(1));
    body.insert("verb".into(), json!(verb_name(&cli.verb)));
    match run(&cli.verb, &cli.cfg) {
        Ok(o) => {
            body.insert("result".into(), o.result);
            if let Some(v) = o.verdict {
                body.insert("verdict".into(), json!(v));
            }
            emit(Value::Object(body), cli.cfg.format);
            if o.verdict == Some(false) {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            body.insert("error".into(), json!({ "kind": e.kind(), "message": e.to_string() }));
            emit(Value::Object(body), cli.cfg.format);
            ExitCode::from(exit_code(&e))
        }
    }
}
