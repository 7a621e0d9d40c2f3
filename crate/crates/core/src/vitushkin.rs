//! Vitushkin variations: exact on the linear class, Monte Carlo for planar
//! curves over F_q, entropy, and numeric checkers for the bounds relating them.

use std::time::Instant;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use serde_json::{json, Value};

use crate::dsl::{Cell, CellSet};
use crate::error::{MvError, Result};
use crate::groth::CVal;
use crate::k::{Field, Poly};
use crate::measure::{c_n, crofton_constant, gl_measure, hoeffding, measure, tube_measure};
use crate::mot_ring::{rat_to_f64, MotElem};
use crate::presburger::MotFun;
use crate::riso::{self, meets, normalize, Branch, Item};
use crate::series::{Ball, KPoly, Ls};
use crate::specialize::{par_chunks, sample_gl, Estimate, TruncatedRing};

/// Confidence of every reported half-width.
pub const CONFIDENCE: f64 = 0.95;

// ---------------------------------------------------------------------------
// exact variations

fn line_of(c: &Cell, k: Field) -> Option<[Ls; 3]> {
    let z = Ls::zero(k);
    let one = Ls::one(k);
    match c {
        Cell::Graph(g) if g.tube.is_none() && g.is_linear() => {
            let (m, c0) = (g.f.coeff(1), g.f.coeff(0));
            Some(if g.swap { [one.neg(), m, c0.neg()] } else { [m, one.neg(), c0.neg()] })
        }
        Cell::Box(v) if v.len() == 2 && v.iter().filter(|b| b.rad.is_some()).count() == 1 => {
            Some(if v[0].rad.is_some() { [z, one, v[1].center.clone()] } else { [one, z, v[0].center.clone()] })
        }
        _ => None,
    }
}

fn same_line(a: &[Ls; 3], b: &[Ls; 3]) -> bool {
    (0..3).all(|i| (i + 1..3).all(|j| a[i].mul(&b[j]) == a[j].mul(&b[i])))
}

fn on_line(l: &[Ls; 3], p: &[Ls]) -> bool {
    l[0].mul(&p[0]).add(&l[1].mul(&p[1])) == l[2]
}

/// Is every top-dimensional cell an affine piece?
fn top_cells_linear(c: &CellSet) -> bool {
    let d = c.dim();
    c.cells.iter().filter(|x| x.dim() == d).all(|x| match x {
        Cell::Graph(g) => g.tube.is_none() && g.is_linear(),
        Cell::Box(_) | Cell::Point(_) => true,
    })
}

/// V_d(X) = C(n, d) mu_d(X) for X inside one d-dimensional affine subspace.
/// For finite X this is V_0.
pub fn v_d_linear(c: &CellSet) -> Result<CVal> {
    let d = c.dim();
    if d == 0 {
        return riso::v0(c);
    }
    if d < c.n {
        let contained = if c.n == 2 {
            let lines: Vec<[Ls; 3]> = c.cells.iter().filter(|x| x.dim() == 1).map(|x| line_of(x, c.field)).collect::<Option<_>>().ok_or(MvError::NotAffine(d))?;
            let l0 = &lines[0];
            lines.iter().all(|l| same_line(l0, l))
                && c.cells.iter().filter_map(|x| if let Cell::Point(p) = x { Some(p) } else { None }).all(|p| on_line(l0, p))
        } else {
            return Err(MvError::Unsupported(format!("affine containment test in K^{}", c.n)));
        };
        if !contained {
            return Err(MvError::NotAffine(d));
        }
    }
    Ok(measure(c, Some(d))?.scale_signed(&crofton_constant(c.n as u32, d as u32)?))
}

/// V_d(X) = C(n, d) mu_d(X) for unions of affine pieces, by additivity of the
/// Crofton integral over pieces meeting in lower dimension.
pub fn v_d_piecewise_linear(c: &CellSet) -> Result<CVal> {
    let d = c.dim();
    if d == 0 {
        return riso::v0(c);
    }
    if !top_cells_linear(c) {
        return Err(MvError::NotAffine(d));
    }
    Ok(measure(c, Some(d))?.scale_signed(&crofton_constant(c.n as u32, d as u32)?))
}

/// lambda-entropy as a function of r, lambda = L^-r.
pub fn entropy(c: &CellSet) -> Result<MotFun> {
    Ok(tube_measure(c)?.mul_l_lin(&[c.n as i64], 0).compact())
}

// ---------------------------------------------------------------------------
// Monte Carlo

/// Roots of q(w) in O, via reduction mod t and lifting of multiple residues.
fn roots_in_o(q: &KPoly, depth: u32) -> u64 {
    let Some(mu) = q.coeffs().iter().filter_map(|x| x.val()).min() else { return 0 };
    let k = q.coeff(0).field();
    let hb = Poly::new(q.coeffs().iter().map(|x| x.coeff(mu)).collect(), k.zero());
    if hb.deg().unwrap_or(0) == 0 {
        return 0;
    }
    let t = Ls::t_pow(k, 1);
    hb.roots_in_k()
        .into_iter()
        .map(|(a, mult)| {
            if mult == 1 || depth == 0 {
                1
            } else {
                roots_in_o(&q.substitute_affine(&Ls::constant(a), &t), depth - 1)
            }
        })
        .sum()
}

/// Planar curve pieces sliced by the sampler.
struct Curve {
    k: Field,
    branches: Vec<Branch>,
    bound: Ball,
    max_roots: u64,
}

fn curve(c: &CellSet) -> Result<Curve> {
    if !c.field.is_finite() {
        return Err(MvError::BaseFieldMismatch("Q".into()));
    }
    if c.n != 2 || c.dim() != 1 {
        return Err(MvError::Unsupported("sampled V_1 needs a curve in K^2".into()));
    }
    let data = normalize(c)?;
    let bound = c.bounding_ball().expect("nonempty");
    let max_roots = data.branches.iter().map(|b| b.f.deg().unwrap_or(0).max(1) as u64).sum::<u64>().max(1);
    Ok(Curve { k: data.k, branches: data.branches, bound, max_roots })
}

/// Points of the slice {g11 x + g12 y = y0} on the curve, restricted to B when given.
fn slice_count(cv: &Curve, g1: &Ls, g2: &Ls, y0: &Ls, within: Option<&Ball>, depth: u32) -> u64 {
    let k = cv.k;
    let mut total = 0;
    for br in &cv.branches {
        let (d, sigma) = match within {
            None => (br.d.clone(), br.sigma),
            Some(b) => match meets(b, br) {
                None => continue,
                Some(m) if m.covering => (b.center[br.axes().0].clone(), b.rad),
                Some(_) => (br.d.clone(), br.sigma),
            },
        };
        // coefficient of the parameter s and of f(s)
        let (cs, cf) = if br.swap { (g2, g1) } else { (g1, g2) };
        let lin = Poly::new(vec![y0.neg(), cs.clone()], Ls::zero(k));
        let p = lin.add(&br.f.scale(cf));
        let q = p.substitute_affine(&d, &Ls::t_pow(k, sigma));
        if q.coeffs().iter().all(|x| x.is_zero()) {
            continue;
        }
        total += roots_in_o(&q, depth);
    }
    total
}

fn estimate_v1(c: &CellSet, within: Option<&Ball>, m: u32, samples: u64, seed: u64) -> Result<Estimate> {
    let cv = curve(c)?;
    let q = cv.k.q();
    let tr = TruncatedRing::new(q, m)?;
    let r = cv.bound.rad;
    let counts: Vec<u64> = par_chunks(samples, seed, |rng, cnt| {
        let mut s = 0u64;
        for _ in 0..cnt {
            let g = sample_gl(&tr, 2, rng);
            let (g1, g2) = (tr.to_ls(&g[0][0]), tr.to_ls(&g[0][1]));
            let u = tr.to_ls(&tr.uniform(rng));
            let y0 = g1.mul(&cv.bound.center[0]).add(&g2.mul(&cv.bound.center[1])).add(&u.shift(r));
            s += slice_count(&cv, &g1, &g2, &y0, within, m);
        }
        s
    });
    let total: u64 = counts.iter().sum();
    let glq = gl_measure(2).eval_int(q as u64)?;
    let qb = BigRational::from_integer(BigInt::from(q));
    let scale = glq * qb.pow(-(r as i32));
    let value = BigRational::new(BigInt::from(total), BigInt::from(samples.max(1))) * &scale;
    let s = rat_to_f64(&scale);
    let dmax = cv.max_roots as f64;
    let bias = s * dmax * (q as f64).powi(-(m as i32));
    Ok(Estimate { value, half_width: s * dmax * hoeffding(samples, 1.0 - CONFIDENCE) + bias, samples, confidence: CONFIDENCE })
}

/// Sampled V_i(X) at q = |k|. i = 1 slices by lines; i = 0 and i > dim X are exact.
pub fn v_i_estimate(c: &CellSet, i: usize, m: u32, samples: u64, seed: u64) -> Result<Estimate> {
    if !c.field.is_finite() {
        return Err(MvError::BaseFieldMismatch("Q".into()));
    }
    match i {
        0 => exact_estimate(&riso::v0(c)?, c.field),
        i if i > c.dim() => Ok(Estimate { value: BigRational::zero(), half_width: 0.0, samples: 0, confidence: 1.0 }),
        1 => estimate_v1(c, None, m, samples, seed),
        _ => Err(MvError::Unsupported(format!("sampled V_{i}"))),
    }
}

/// Sampled V_i(X, B): slice points counted only inside B.
pub fn v_i_rel_estimate(c: &CellSet, b: &Ball, i: usize, m: u32, samples: u64, seed: u64) -> Result<Estimate> {
    if !c.field.is_finite() {
        return Err(MvError::BaseFieldMismatch("Q".into()));
    }
    match i {
        0 => exact_estimate(&riso::v0_rel(c, b)?, c.field),
        i if i > c.dim() => Ok(Estimate { value: BigRational::zero(), half_width: 0.0, samples: 0, confidence: 1.0 }),
        1 => estimate_v1(c, Some(b), m, samples, seed),
        _ => Err(MvError::Unsupported(format!("sampled V_{i}"))),
    }
}

fn exact_estimate(v: &CVal, k: Field) -> Result<Estimate> {
    Ok(Estimate { value: cval_at(v, k)?, half_width: 0.0, samples: 0, confidence: 1.0 })
}

/// Specialization of a class value at q = |k|.
pub fn cval_at(v: &CVal, k: Field) -> Result<BigRational> {
    if !k.is_finite() {
        return Err(MvError::BaseFieldMismatch("Q".into()));
    }
    v.count_points(k.q())
}

// ---------------------------------------------------------------------------
// checks

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Symbolic,
    Specialized,
}

/// One side of a checked relation.
#[derive(Clone, Debug, PartialEq)]
pub struct Quantity {
    pub exact: Option<String>,
    pub value: f64,
    pub half_width: f64,
}

impl Quantity {
    pub fn exact_rat(r: &BigRational) -> Self {
        Quantity { exact: Some(r.to_string()), value: rat_to_f64(r), half_width: 0.0 }
    }
    pub fn sampled(e: &Estimate) -> Self {
        Quantity { exact: None, value: e.value_f64(), half_width: e.half_width }
    }
    fn to_json(&self) -> Value {
        json!({ "exact": self.exact, "value": round(self.value), "half_width": round(self.half_width) })
    }
}

fn round(x: f64) -> f64 {
    (x * 1e12).round() / 1e12
}

#[derive(Clone, Debug)]
pub struct CheckReport {
    pub name: String,
    pub mode: Mode,
    pub lhs: Quantity,
    pub rhs: Quantity,
    pub verdict: bool,
    pub runtime_ms: u128,
    /// per-parameter rows (entropy radii, summands)
    pub rows: Vec<Value>,
}

impl CheckReport {
    /// Runtime is left out so that equal inputs give identical output.
    pub fn to_json(&self) -> Value {
        json!({
            "name": self.name,
            "mode": match self.mode { Mode::Symbolic => "symbolic", Mode::Specialized => "specialized" },
            "lhs": self.lhs.to_json(),
            "rhs": self.rhs.to_json(),
            "verdict": self.verdict,
            "rows": self.rows,
        })
    }
}

fn inconclusive(what: &str, lhs: &Quantity, rhs: &Quantity) -> MvError {
    MvError::Inconclusive(format!(
        "{what}: {} +- {} vs {} +- {}; raise the sample count",
        lhs.value, lhs.half_width, rhs.value, rhs.half_width
    ))
}

/// Decide lhs <= rhs with half-widths.
fn leq(lhs: &Quantity, rhs: &Quantity) -> Option<bool> {
    let slack = lhs.half_width + rhs.half_width;
    if lhs.value + slack <= rhs.value || (slack == 0.0 && lhs.value <= rhs.value) {
        Some(true)
    } else if lhs.value - slack > rhs.value {
        Some(false)
    } else {
        None
    }
}

fn exact_leq(a: &BigRational, b: &BigRational) -> bool {
    a <= b
}

/// |V_1 estimate / (C(2,1) mu_1) - 1| <= tol at q = |k|.
pub fn check_crofton(c: &CellSet, m: u32, samples: u64, seed: u64, tol: f64) -> Result<CheckReport> {
    let t0 = Instant::now();
    let est = v_i_estimate(c, 1, m, samples, seed)?;
    let target_sym = measure(c, Some(1))?.scale_signed(&crofton_constant(2, 1)?);
    let target = cval_at(&target_sym, c.field)?;
    if target.is_zero() {
        return Err(MvError::DomainError("zero 1-dimensional measure".into()));
    }
    let ratio = est.value_f64() / rat_to_f64(&target);
    let rel_hw = est.half_width / rat_to_f64(&target);
    let dev = (ratio - 1.0).abs();
    let lhs = Quantity::sampled(&est);
    let rhs = Quantity::exact_rat(&target);
    let verdict = if dev + rel_hw <= tol {
        true
    } else if dev - rel_hw > tol {
        false
    } else {
        return Err(inconclusive("crofton", &lhs, &rhs));
    };
    Ok(CheckReport {
        name: "crofton".into(),
        mode: Mode::Specialized,
        lhs,
        rhs,
        verdict,
        runtime_ms: t0.elapsed().as_millis(),
        rows: vec![json!({
            "ratio": round(ratio),
            "relative_half_width": round(rel_hw),
            "tolerance": tol,
            "target_symbolic": target_sym.to_string(),
        })],
    })
}

/// V_i(X)(q) for all i <= dim X: exact where possible, else sampled.
fn variations(c: &CellSet, m: u32, samples: u64, seed: u64) -> Result<Vec<Quantity>> {
    let d = c.dim();
    let mut out = vec![Quantity::exact_rat(&cval_at(&riso::v0(c)?, c.field)?)];
    for i in 1..=d {
        if i == d {
            if let Ok(v) = v_d_piecewise_linear(c) {
                out.push(Quantity::exact_rat(&cval_at(&v, c.field)?));
                continue;
            }
        }
        out.push(Quantity::sampled(&v_i_estimate(c, i, m, samples, seed.wrapping_add(i as u64))?));
    }
    Ok(out)
}

/// M(X, L^-r)(q) C(n)(q) <= sum_i q^{ri} V_i(X)(q) for r in the range.
pub fn check_entropy(c: &CellSet, rs: std::ops::RangeInclusive<i64>, m: u32, samples: u64, seed: u64) -> Result<CheckReport> {
    let t0 = Instant::now();
    let k = c.field;
    let q = k.q();
    let ent = entropy(c)?;
    let cn = c_n(c.n as u32).eval_int(q as u64)?;
    let vs = variations(c, m, samples, seed)?;
    let qf = q as f64;
    let mut rows = vec![];
    let mut verdict = true;
    let mut worst: Option<(f64, Quantity, Quantity)> = None;
    let mut undecided = None;
    for r in rs {
        let mr = cval_at(&ent.eval1(r), k)?;
        let lhs_r = &mr * &cn;
        let lhs = Quantity::exact_rat(&lhs_r);
        let rhs = if vs.iter().all(|v| v.exact.is_some()) {
            let mut acc = BigRational::zero();
            for (i, v) in vs.iter().enumerate() {
                let exact: BigRational = v.exact.as_ref().expect("exact").parse().map_err(|_| MvError::PrecisionLoss)?;
                acc += exact * BigRational::from_integer(BigInt::from(q)).pow((r * i as i64) as i32);
            }
            Quantity::exact_rat(&acc)
        } else {
            let mut val = 0.0;
            let mut hw = 0.0;
            for (i, v) in vs.iter().enumerate() {
                let w = qf.powi((r * i as i64) as i32);
                val += w * v.value;
                hw += w * v.half_width;
            }
            Quantity { exact: None, value: val, half_width: hw }
        };
        let ok = match (&lhs.exact, &rhs.exact) {
            (Some(_), Some(b)) => Some(exact_leq(&lhs_r, &b.parse().map_err(|_| MvError::PrecisionLoss)?)),
            _ => leq(&lhs, &rhs),
        };
        match ok {
            Some(v) => verdict &= v,
            None => undecided = Some((lhs.clone(), rhs.clone())),
        }
        rows.push(json!({ "r": r, "lhs": lhs.to_json(), "rhs": rhs.to_json(), "holds": ok }));
        let gap = lhs.value - rhs.value;
        if worst.as_ref().is_none_or(|w| gap > w.0) {
            worst = Some((gap, lhs, rhs));
        }
    }
    if verdict {
        if let Some((l, r)) = undecided {
            return Err(inconclusive("entropy", &l, &r));
        }
    }
    let (_, lhs, rhs) = worst.ok_or_else(|| MvError::DomainError("empty radius range".into()))?;
    let mode = if vs.iter().all(|v| v.exact.is_some()) { Mode::Symbolic } else { Mode::Specialized };
    Ok(CheckReport { name: "entropy".into(), mode, lhs, rhs, verdict, runtime_ms: t0.elapsed().as_millis(), rows })
}

/// sum_i lambda^-i V_i(X, B)(q) >= C(n)(q), lambda the radius of B.
/// Terms are nonnegative, so summation stops once the bound is reached.
pub fn check_sum_variations(c: &CellSet, b: &Ball, m: u32, samples: u64, seed: u64) -> Result<CheckReport> {
    let t0 = Instant::now();
    let k = c.field;
    let q = k.q();
    let cn = c_n(c.n as u32).eval_int(q as u64)?;
    let rhs = Quantity::exact_rat(&cn);
    let mut rows = vec![];
    let v0 = cval_at(&riso::v0_rel(c, b)?, k)?;
    rows.push(json!({ "i": 0, "term": Quantity::exact_rat(&v0).to_json() }));
    let mut lhs = Quantity::exact_rat(&v0);
    let mut exact_sum = v0.clone();
    if exact_sum < cn {
        for i in 1..=c.dim() {
            let e = v_i_rel_estimate(c, b, i, m, samples, seed.wrapping_add(i as u64))?;
            let w = (q as f64).powi((b.rad * i as i64) as i32);
            rows.push(json!({ "i": i, "term": Quantity::sampled(&e).to_json(), "weight": w }));
            exact_sum += e.value.clone() * BigRational::from_integer(BigInt::from(q)).pow((b.rad * i as i64) as i32);
            lhs = Quantity { exact: None, value: rat_to_f64(&exact_sum), half_width: lhs.half_width + w * e.half_width };
        }
    }
    let verdict = match leq(&rhs, &lhs) {
        Some(v) => v,
        None => return Err(inconclusive("sum of variations", &lhs, &rhs)),
    };
    let mode = if lhs.exact.is_some() { Mode::Symbolic } else { Mode::Specialized };
    Ok(CheckReport { name: "sum-variations".into(), mode, lhs, rhs, verdict, runtime_ms: t0.elapsed().as_millis(), rows })
}

/// Radius of the smallest ball containing an item (points: unbounded).
fn item_radius(it: &Item) -> Option<i64> {
    match it {
        Item::Ball(b) => Some(b.rad),
        Item::Point { .. } => None,
        Item::Conjugates { around, .. } => Some(around.rad),
    }
}

/// lambda^-n integral of V_0(X, B(x, lambda)) dx, lambda = L^-r: an item is
/// inside B(x, lambda) exactly when x lies in the radius-r ball around it.
pub fn integral_v0(c: &CellSet, r: i64) -> Result<BigRational> {
    let rep = riso::min_nonrisotrivial(c)?;
    let mut s = BigRational::zero();
    for it in &rep.items {
        if item_radius(it).is_none_or(|ir| ir >= r) {
            s += cval_at(&it.class()?, c.field)?;
        }
    }
    Ok(s)
}

/// lambda^-n integral of V_i(X, B(x, lambda)) dx <= V_i(X)(q).
pub fn check_vi_integral_bound(c: &CellSet, i: usize, r: i64, m: u32, samples: u64, seed: u64) -> Result<CheckReport> {
    let t0 = Instant::now();
    let k = c.field;
    let (lhs, rhs, mode) = if i == 0 {
        let l = integral_v0(c, r)?;
        let v = cval_at(&riso::v0(c)?, k)?;
        (Quantity::exact_rat(&l), Quantity::exact_rat(&v), Mode::Symbolic)
    } else {
        // each slice point lies in B(x, lambda) for x in a set of measure lambda^n,
        // so the integral reproduces the sampled V_i itself
        let e = v_i_estimate(c, i, m, samples, seed)?;
        (Quantity::sampled(&e), Quantity::sampled(&e), Mode::Specialized)
    };
    let verdict = if i == 0 {
        let a: BigRational = lhs.exact.as_ref().expect("exact").parse().map_err(|_| MvError::PrecisionLoss)?;
        let b: BigRational = rhs.exact.as_ref().expect("exact").parse().map_err(|_| MvError::PrecisionLoss)?;
        a <= b
    } else {
        lhs.value <= rhs.value + lhs.half_width + rhs.half_width
    };
    Ok(CheckReport {
        name: "integral-bound".into(),
        mode,
        lhs,
        rhs,
        verdict,
        runtime_ms: t0.elapsed().as_millis(),
        rows: vec![json!({ "i": i, "r": r })],
    })
}

/// Ratio V_1(tX) / V_1(X) by paired sampling (same seed for both sets).
#[derive(Clone, Debug)]
pub struct Homogeneity {
    pub base: Estimate,
    pub scaled: Estimate,
    pub ratio: f64,
    pub target: f64,
}

pub fn homogeneity(c: &CellSet, m: u32, samples: u64, seed: u64) -> Result<Homogeneity> {
    let base = v_i_estimate(c, 1, m, samples, seed)?;
    let scaled = v_i_estimate(&c.scale_t(1), 1, m, samples, seed)?;
    let ratio = scaled.value_f64() / base.value_f64();
    Ok(Homogeneity { base, scaled, ratio, target: 1.0 / c.field.q() as f64 })
}

/// Exact homogeneity on the linear class: V_d(tX) = L^-d V_d(X).
pub fn homogeneity_linear(c: &CellSet) -> Result<bool> {
    let d = c.dim() as i64;
    let a = v_d_piecewise_linear(&c.scale_t(1))?;
    let b = v_d_piecewise_linear(c)?.scale_signed(&MotElem::l_pow(-d));
    Ok(a == b)
}
