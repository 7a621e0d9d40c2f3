//! Acceptance suite: one PASS/FAIL line per criterion. Exits non-zero on any FAIL.

use std::time::{Duration, Instant};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Signed;

use motivic_vitushkin::dsl::{cellset_from_text, CellSet};
use motivic_vitushkin::groth::{CVal, ClassAtom};
use motivic_vitushkin::k::Field;
use motivic_vitushkin::measure::{
    crofton_constant, crofton_constant_at, gl_measure, grassmann_transverse_measure, poincare_series,
};
use motivic_vitushkin::mot_ring::{parse_mot, rat_to_f64, MotElem};
use motivic_vitushkin::presburger::{Guard, Limit, MotFun, RationalSeries, Tri};
use motivic_vitushkin::preorder::{check_witness, etale_cover_witness, specialize_witness};
use motivic_vitushkin::riso::{min_nonrisotrivial, v0, Item};
use motivic_vitushkin::series::{Ball, Ls};
use motivic_vitushkin::specialize::{count_measure, count_tube, residue_matrix_counts, stream_rng, uniform_below};
use motivic_vitushkin::tensor::{agreement, lemma_check, Ctx};
use motivic_vitushkin::vitushkin::{
    check_crofton, check_entropy, check_sum_variations, check_vi_integral_bound, homogeneity, homogeneity_linear,
};
use motivic_vitushkin::MvError;

type Outcome = Result<String, String>;

const LINE: &str = "graph(y = 0, x in B(0,0))";
const PARABOLA: &str = "graph(y = x^2, x in B(0,0))";
const TWO_LINES: &str = "graph(y = 0, x in B(0,0)) | graph(y = t*x, x in B(0,0))";
const CUBIC_UNION: &str = "graph(y = t*x^3 - t*x, x in B(0,0)) | graph(y = 0, x in B(0,0))";

fn set(text: &str, k: Field) -> CellSet {
    cellset_from_text(text, Some(k)).expect("fixture parses")
}

fn ff(q: u32) -> Field {
    Field::parse(&format!("F{q}")).unwrap()
}

fn rat(n: i64, d: i64) -> BigRational {
    BigRational::new(n.into(), d.into())
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e<T: std::fmt::Debug>(x: T) -> String {
    format!("{x:?}")
}

fn origin(k: Field) -> Vec<Ls> {
    vec![Ls::zero(k), Ls::zero(k)]
}

fn c1_riso() -> Outcome {
    let k = Field::Q;
    let cases: [(&str, Vec<Item>); 3] = [
        (LINE, vec![Item::Ball(Ball::new(origin(k), -1))]),
        (PARABOLA, vec![Item::Ball(Ball::new(origin(k), 0))]),
        (TWO_LINES, vec![Item::Point { at: origin(k), prec: None }]),
    ];
    for (text, want) in cases {
        let t = Instant::now();
        let rep = min_nonrisotrivial(&set(text, k)).map_err(e)?;
        ensure(rep.items == want, || format!("{text}: items {:?}", rep.items.iter().map(|i| i.to_string()).collect::<Vec<_>>()))?;
        ensure(rep.s0_class == CVal::one(), || format!("{text}: V0 = {}", rep.s0_class))?;
        ensure(t.elapsed() < Duration::from_secs(1), || format!("{text}: {:?}", t.elapsed()))?;
    }
    let t = Instant::now();
    let v = v0(&set(CUBIC_UNION, k)).map_err(e)?;
    ensure(v == CVal::int(3), || format!("union V0 = {v}"))?;
    ensure(t.elapsed() < Duration::from_secs(1), || format!("union: {:?}", t.elapsed()))?;
    Ok("4 fixtures, items and V0 exact".into())
}

fn c2_grassmann() -> Outcome {
    let g = grassmann_transverse_measure(2, 1).map_err(e)?;
    ensure(g == parse_mot("(1 - L^-1)^2").unwrap(), || format!("symbolic {g}"))?;
    let mut seen = vec![];
    for q in [2u32, 3, 5] {
        let (_, tr) = residue_matrix_counts(2, 1, q).map_err(e)?;
        let count = BigRational::new(tr.into(), BigInt::from(q).pow(4));
        let at = g.eval_int(q as u64).map_err(e)?;
        ensure(at == count, || format!("q={q}: {at} vs {count}"))?;
        seen.push(format!("q={q}:{count}"));
    }
    ensure(seen[0] == "q=2:1/4", || "q=2 count".into())?;
    Ok(seen.join(" "))
}

fn c3_gl() -> Outcome {
    let g = gl_measure(2);
    let mut seen = vec![];
    for q in [2u32, 3] {
        let (gl, _) = residue_matrix_counts(2, 2, q).map_err(e)?;
        let count = BigRational::new(gl.into(), BigInt::from(q).pow(4));
        let at = g.eval_int(q as u64).map_err(e)?;
        ensure(at == count, || format!("q={q}: {at} vs {count}"))?;
        seen.push(format!("q={q}:{count}"));
    }
    ensure(seen[0] == "q=2:3/8", || "q=2 is 6/16".into())?;
    Ok(seen.join(" "))
}

fn c4_normalization() -> Outcome {
    let mk = set("box(B(0,1))", ff(2));
    for m in [2, 3, 4] {
        let v = count_measure(&mk, m).map_err(e)?;
        ensure(v == rat(1, 2), || format!("m={m}: {v}"))?;
    }
    Ok("count = 1/2 at m = 2,3,4".into())
}

fn c5_poincare() -> Outcome {
    let s = poincare_series(&set(LINE, Field::Q)).map_err(e)?;
    let want = RationalSeries::geometric(-1, 1);
    ensure(s.equals(&want), || format!("series {s}"))?;
    let x2 = set(LINE, ff(2));
    for r in 0..=5u32 {
        let sym = s.coefficient(r).eval_int(2).map_err(e)?;
        let cnt = count_tube(&x2, r as i64, 6).map_err(e)?;
        ensure(sym == cnt, || format!("r={r}: {sym} vs {cnt}"))?;
    }
    Ok(format!("{s}, r<=5 match count_tube at q=2"))
}

fn c6_crofton() -> Outcome {
    let q = 3;
    let c = set(PARABOLA, ff(q));
    let rep = check_crofton(&c, 6, 200_000, 42, 0.05).map_err(e)?;
    let ratio = rep.rows[0]["ratio"].as_f64().ok_or("no ratio")?;
    ensure((ratio - 1.0).abs() <= 0.05, || format!("ratio {ratio}"))?;
    ensure(rep.verdict, || "verdict false".into())?;
    let sym = rat_to_f64(&crofton_constant(2, 1).map_err(e)?.eval_int(q as u64).map_err(e)?);
    let mc = crofton_constant_at(2, 1, q, 6, 200_000, 43).map_err(e)?;
    let gap = (mc.value_f64() - sym).abs();
    ensure(gap <= mc.half_width, || format!("C(2,1)(3) = {sym}, sampled {} +- {}", mc.value_f64(), mc.half_width))?;
    Ok(format!("ratio {ratio:.4}, C(2,1)(3) = {sym:.5} vs sampled {:.5} +- {:.5}", mc.value_f64(), mc.half_width))
}

fn c7_entropy() -> Outcome {
    let mut n = 0;
    for text in [LINE, TWO_LINES] {
        for q in [2u32, 3] {
            let rep = check_entropy(&set(text, ff(q)), 0..=5, 6, 100_000, 42).map_err(e)?;
            ensure(rep.verdict, || format!("{text} q={q}: {:?}", rep.rows))?;
            n += 1;
        }
    }
    Ok(format!("{n} runs, r in 0..=5, all true"))
}

fn c8_sumvar() -> Outcome {
    let k = ff(3);
    let rep = check_sum_variations(&set(TWO_LINES, k), &Ball::new(origin(k), 1), 6, 100_000, 42).map_err(e)?;
    ensure(rep.lhs.exact.as_deref() == Some("1"), || format!("lhs {:?}", rep.lhs))?;
    ensure(rep.rhs.exact.as_deref() == Some("4/9"), || format!("rhs {:?}", rep.rhs))?;
    ensure(rep.verdict, || "verdict false".into())?;
    Ok("V0(X,B)(3) = 1 >= 4/9".into())
}

fn c9_integral() -> Outcome {
    let rep = check_vi_integral_bound(&set(LINE, ff(2)), 0, 1, 6, 10_000, 42).map_err(e)?;
    ensure(rep.lhs.exact.is_some() && rep.rhs.exact.as_deref() == Some("1"), || format!("{:?} {:?}", rep.lhs, rep.rhs))?;
    ensure(rep.verdict, || format!("{:?} > {:?}", rep.lhs, rep.rhs))?;
    Ok(format!("{} <= {}", rep.lhs.exact.unwrap(), rep.rhs.exact.unwrap()))
}

/// Nonnegative at every rational in a dense grid of (1, 10].
fn dense_nonneg(x: &MotElem) -> Option<BigRational> {
    (1..=360).map(|i| BigRational::new((40 + i).into(), 40.into())).find(|r| match x.eval_at(r) {
        Ok(v) => v.is_negative(),
        Err(_) => false,
    })
}

fn c10_positivity() -> Outcome {
    for n in 1..=5 {
        let x = parse_mot(&format!("(1 - L^-1)^{n}")).unwrap();
        ensure(x.is_nonneg(), || format!("(1-L^-1)^{n}"))?;
    }
    ensure(parse_mot("(L - 2)^2").unwrap().is_nonneg(), || "(L-2)^2".into())?;
    ensure(!parse_mot("L - 2").unwrap().is_nonneg(), || "L-2".into())?;
    ensure(!parse_mot("2 - L").unwrap().is_nonneg(), || "2-L".into())?;
    let mut rng = stream_rng(7, 0);
    let (mut pos, mut neg) = (0, 0);
    for _ in 0..200 {
        let mut x = MotElem::zero();
        for _ in 0..1 + uniform_below(&mut rng, 4) {
            let c = uniform_below(&mut rng, 7) as i64 - 3;
            let p = uniform_below(&mut rng, 7) as i64 - 3;
            x = x.add(&MotElem::mono(c, p));
        }
        if uniform_below(&mut rng, 2) == 0 {
            x = x.mul(&x);
        }
        if uniform_below(&mut rng, 3) == 0 {
            x = x.mul(&MotElem::inv_one_minus_l(1 + uniform_below(&mut rng, 2)));
        }
        let decided = x.is_nonneg();
        let sampled = dense_nonneg(&x);
        if decided {
            ensure(sampled.is_none(), || format!("{x} decided nonneg, negative at {}", sampled.unwrap()))?;
            pos += 1;
        } else {
            let w = x.negativity_witness().unwrap();
            let v = x.eval_at(&w).map_err(e)?;
            ensure(w > rat(1, 1) && v.is_negative(), || format!("{x}: bad witness {w}"))?;
            neg += 1;
        }
    }
    Ok(format!("8 fixed cases; 200 fuzzed ({pos} nonneg, {neg} not)"))
}

fn random_geo(rng: &mut rand_chacha::ChaCha20Rng) -> MotFun {
    let mut f = MotFun::zero(1);
    for _ in 0..1 + uniform_below(rng, 3) {
        let c = uniform_below(rng, 3) as i64;
        let s = uniform_below(rng, 3) as i64 - 2;
        let b = uniform_below(rng, 3) as i64 - 1;
        let lo = uniform_below(rng, 3) as i64;
        let m = 1 + uniform_below(rng, 2) as i64;
        let res = uniform_below(rng, 2) as i64 % m;
        f = f.add(&MotFun::geometric(Guard::range_mod(Some(lo), None, m, res), MotElem::int(c), s, b));
    }
    f
}

fn c11_limits() -> Outcome {
    let mut rng = stream_rng(11, 0);
    let mut squeezed = 0;
    for _ in 0..200 {
        let (f, g) = (random_geo(&mut rng), random_geo(&mut rng));
        if f.add(&g).limit().map_err(e)? == Limit::Value(CVal::zero()) {
            squeezed += 1;
            ensure(f.limit().map_err(e)? == Limit::Value(CVal::zero()), || format!("f {:?}", f.limit()))?;
            ensure(g.limit().map_err(e)? == Limit::Value(CVal::zero()), || format!("g {:?}", g.limit()))?;
        }
    }
    let mut monotone = 0;
    for _ in 0..200 {
        let f = random_geo(&mut rng);
        let bound = CVal::int(uniform_below(&mut rng, 6) as i64);
        if f.is_increasing(Some(0)).map_err(e)? == Tri::True && f.is_bounded_by(&bound).map_err(e)? == Tri::True {
            monotone += 1;
            ensure(f.limit().map_err(e)? != Limit::NoLimit, || "monotone bounded without limit".into())?;
        }
    }
    ensure(squeezed > 0 && monotone > 0, || format!("vacuous: {squeezed} squeeze, {monotone} monotone premises"))?;
    Ok(format!("premises met: squeeze {squeezed}/200, monotone-bounded {monotone}/200"))
}

fn c12_preorder() -> Outcome {
    let q = Field::Q;
    let cover = ClassAtom::etale_str("x^2 - 2", q).map_err(e)?;
    let w = etale_cover_witness(cover.clone(), q);
    let f = CVal::atom(cover).sub(&CVal::one());
    ensure(check_witness(&f, &w).map_err(e)?, || "witness rejected".into())?;
    let mut tampered = w.clone();
    tampered.z = vec![ClassAtom::etale_str("x^2 - 3", q).map_err(e)?];
    ensure(!matches!(check_witness(&f, &tampered), Ok(true)), || "tampered cover accepted".into())?;
    let mut tampered = w.clone();
    tampered.phi = vec![(0, CVal::int(2))];
    ensure(!matches!(check_witness(&f, &tampered), Ok(true)), || "tampered phi accepted".into())?;
    let k7 = ff(7);
    let c7 = ClassAtom::etale_str("x^2 - 2", k7).map_err(e)?;
    let f7 = CVal::atom(c7.clone()).sub(&CVal::one());
    let n = specialize_witness(&f7, &etale_cover_witness(c7, k7)).map_err(e)?;
    ensure(n == rat(1, 1), || format!("F7 count {n}"))?;
    ensure(matches!(specialize_witness(&f, &w), Err(MvError::BaseFieldMismatch(_))), || "Q specialization".into())?;
    Ok("verifies, 2 tampered rejected, F7 gives 1 >= 0, Q raises BaseFieldMismatch".into())
}

fn c13_tensor() -> Outcome {
    let a = agreement::<u64>(&Ctx { r1: 2, r2: 1, bound: 3 }, 500, 2, 42);
    ensure(a.disagreements == 0, || format!("{a:?}"))?;
    let lemma = lemma_check::<u64>(&Ctx { r1: 2, r2: 2, bound: 3 }, &[vec![0, 1]], &[], 100, 42).map_err(e)?;
    ensure(lemma.holds(), || format!("counterexample {:?}", lemma.counterexample))?;
    let even = lemma_check::<u64>(&Ctx { r1: 1, r2: 1, bound: 3 }, &[vec![2]], &[], 100, 42);
    ensure(matches!(even, Err(MvError::HypothesisFailed(_))), || "even naturals not rejected".into())?;
    Ok(format!("500 pairs agree ({} equal); 100 instances, no counterexample; even naturals rejected", a.nf_equal))
}

fn c14_homogeneity() -> Outcome {
    for text in [LINE, TWO_LINES] {
        ensure(homogeneity_linear(&set(text, Field::Q)).map_err(e)?, || format!("{text}: V1(tX) != L^-1 V1(X)"))?;
    }
    let h = homogeneity(&set(PARABOLA, ff(3)), 6, 200_000, 42).map_err(e)?;
    let rel = (h.ratio / h.target - 1.0).abs();
    ensure(rel <= 0.07, || format!("ratio {} vs {}", h.ratio, h.target))?;
    Ok(format!("linear class exact; parabola ratio {:.4} vs 1/3", h.ratio))
}

fn main() {
    let criteria: [(u32, &str, Duration, fn() -> Outcome); 14] = [
        (1, "riso regression", Duration::from_secs(4), c1_riso),
        (2, "transverse Grassmannian measure", Duration::from_secs(1), c2_grassmann),
        (3, "GL measure", Duration::from_secs(1), c3_gl),
        (4, "normalization", Duration::from_secs(1), c4_normalization),
        (5, "Poincare series", Duration::from_secs(5), c5_poincare),
        (6, "Cauchy-Crofton", Duration::from_secs(300), c6_crofton),
        (7, "entropy bound", Duration::from_secs(120), c7_entropy),
        (8, "sum of variations", Duration::from_secs(1), c8_sumvar),
        (9, "integral bound", Duration::from_secs(5), c9_integral),
        (10, "positivity decision", Duration::from_secs(10), c10_positivity),
        (11, "limit engine", Duration::from_secs(30), c11_limits),
        (12, "preorder", Duration::from_secs(1), c12_preorder),
        (13, "tensor appendix", Duration::from_secs(60), c13_tensor),
        (14, "homogeneity", Duration::from_secs(300), c14_homogeneity),
    ];
    let mut failed = 0;
    for (n, name, budget, run) in criteria {
        let t = Instant::now();
        let out = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let dt = t.elapsed();
        let out = out.and_then(|d| if dt <= budget { Ok(d) } else { Err(format!("{d}; over budget {budget:?}")) });
        match out {
            Ok(d) => println!("PASS {n:>2} {name}: {d} [{:.2}s]", dt.as_secs_f64()),
            Err(d) => {
                failed += 1;
                println!("FAIL {n:>2} {name}: {d} [{:.2}s]", dt.as_secs_f64())
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 14 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
