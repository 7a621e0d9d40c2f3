//! Brute-force counting over F_q[[t]]/t^m: the numeric oracle behind every
//! cross-check, plus deterministic sampling of GL_n(O/t^m) and translations.

use std::collections::HashSet;

use num_bigint::BigInt;
use num_rational::BigRational;
use rand_chacha::rand_core::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::dsl::{BallSpec, Cell, CellSet, GraphCell};
use crate::error::{MvError, Result};
use crate::k::{Field, Gf, Kx, Poly};
use crate::series::{Ls, KPoly};

/// O_K / t^m over F_q; elements are little-endian digit vectors of length m.
#[derive(Clone, Copy)]
pub struct TruncatedRing {
    pub q: u32,
    pub m: u32,
    pub gf: &'static Gf,
}

pub type Trunc = Vec<u16>;

impl TruncatedRing {
    pub fn new(q: u32, m: u32) -> Result<Self> {
        match Field::finite(q)? {
            Field::F(gf) => Ok(TruncatedRing { q, m, gf }),
            Field::Q => unreachable!(),
        }
    }
    pub fn field(&self) -> Field {
        Field::F(self.gf)
    }
    pub fn zero(&self) -> Trunc {
        vec![0; self.m as usize]
    }
    pub fn one(&self) -> Trunc {
        let mut v = self.zero();
        if self.m > 0 {
            v[0] = 1;
        }
        v
    }
    pub fn add(&self, a: &[u16], b: &[u16]) -> Trunc {
        a.iter().zip(b).map(|(x, y)| self.gf.add(*x, *y)).collect()
    }
    pub fn sub(&self, a: &[u16], b: &[u16]) -> Trunc {
        a.iter().zip(b).map(|(x, y)| self.gf.sub(*x, *y)).collect()
    }
    pub fn mul(&self, a: &[u16], b: &[u16]) -> Trunc {
        let m = self.m as usize;
        let mut out = vec![0u16; m];
        for (i, &x) in a.iter().enumerate() {
            if x == 0 {
                continue;
            }
            for (j, &y) in b.iter().take(m - i).enumerate() {
                out[i + j] = self.gf.add(out[i + j], self.gf.mul(x, y));
            }
        }
        out
    }
    /// Valuation, m for zero.
    pub fn val(&self, a: &[u16]) -> u32 {
        a.iter().position(|&x| x != 0).map_or(self.m, |i| i as u32)
    }
    pub fn is_unit(&self, a: &[u16]) -> bool {
        self.m > 0 && a[0] != 0
    }
    pub fn to_ls(&self, a: &[u16]) -> Ls {
        Ls::from_terms(self.field(), a.iter().enumerate().map(|(i, &x)| (i as i64, Kx::F(self.gf, x))))
    }
    /// Reduction mod t^m of an integral series.
    pub fn from_ls(&self, x: &Ls) -> Result<Trunc> {
        if x.val().is_some_and(|v| v < 0) {
            return Err(MvError::DomainError(format!("{x} is not integral")));
        }
        Ok((0..self.m as i64)
            .map(|e| match x.coeff(e) {
                Kx::F(_, c) => c,
                Kx::Q(_) => 0,
            })
            .collect())
    }
    pub fn uniform(&self, rng: &mut ChaCha20Rng) -> Trunc {
        (0..self.m).map(|_| uniform_below(rng, self.q) as u16).collect()
    }
    /// All elements c + t^rho w with w mod t^(m - rho); just c when rho >= m.
    pub fn ball(&self, c: &Trunc, rho: i64) -> Vec<Trunc> {
        let m = self.m as i64;
        if rho >= m {
            return vec![c.clone()];
        }
        let rho = rho.max(0) as usize;
        let free = self.m as usize - rho;
        let total = (self.q as u64).pow(free as u32);
        let mut out = Vec::with_capacity(total as usize);
        for code in 0..total {
            let mut v = c.clone();
            let mut x = code;
            for d in v.iter_mut().skip(rho) {
                *d = (x % self.q as u64) as u16;
                x /= self.q as u64;
            }
            out.push(v);
        }
        out
    }
}

/// Unbiased integer in [0, n).
pub fn uniform_below(rng: &mut ChaCha20Rng, n: u32) -> u32 {
    let zone = u32::MAX - (u32::MAX % n);
    loop {
        let x = rng.next_u32();
        if x < zone {
            return x % n;
        }
    }
}

/// Generator for stream `stream` under `seed` (ChaCha20, 64-bit stream id).
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut r = ChaCha20Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Samples per stream; the split does not depend on the thread count.
pub const CHUNK: u64 = 4096;

/// Worker threads: MV_THREADS if set, else the available parallelism.
pub fn threads() -> usize {
    std::env::var("MV_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Run f over `samples` draws split into fixed chunks; chunk i uses stream i.
/// Results come back in chunk order.
pub fn par_chunks<T, F>(samples: u64, seed: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut ChaCha20Rng, u64) -> T + Sync,
{
    let nchunks = samples.div_ceil(CHUNK);
    let sizes: Vec<u64> = (0..nchunks).map(|i| CHUNK.min(samples - i * CHUNK)).collect();
    let nt = threads().min(nchunks.max(1) as usize);
    let mut results: Vec<Option<T>> = (0..nchunks).map(|_| None).collect();
    std::thread::scope(|s| {
        let f = &f;
        let sizes = &sizes;
        let handles: Vec<_> = (0..nt)
            .map(|t| {
                s.spawn(move || {
                    let mut out = vec![];
                    let mut i = t;
                    while i < sizes.len() {
                        let mut rng = stream_rng(seed, i as u64);
                        out.push((i, f(&mut rng, sizes[i])));
                        i += nt;
                    }
                    out
                })
            })
            .collect();
        for h in handles {
            for (i, v) in h.join().expect("worker panicked") {
                results[i] = Some(v);
            }
        }
    });
    results.into_iter().map(|x| x.expect("chunk done")).collect()
}

/// Monte Carlo result.
#[derive(Clone, Debug)]
pub struct Estimate {
    pub value: BigRational,
    pub half_width: f64,
    pub samples: u64,
    pub confidence: f64,
}

impl Estimate {
    pub fn value_f64(&self) -> f64 {
        crate::mot_ring::rat_to_f64(&self.value)
    }
}

pub type Matrix = Vec<Vec<Trunc>>;

fn residue_det(gf: &Gf, a: &[Vec<u16>]) -> u16 {
    // Gaussian elimination over F_q
    let n = a.len();
    let mut m: Vec<Vec<u16>> = a.to_vec();
    let mut det = 1u16;
    for col in 0..n {
        let Some(p) = (col..n).find(|&r| m[r][col] != 0) else { return 0 };
        if p != col {
            m.swap(p, col);
            det = gf.neg(det);
        }
        det = gf.mul(det, m[col][col]);
        let inv = gf.inv(m[col][col]);
        for r in col + 1..n {
            let f = gf.mul(m[r][col], inv);
            if f != 0 {
                for c in col..n {
                    let x = gf.mul(f, m[col][c]);
                    m[r][c] = gf.sub(m[r][c], x);
                }
            }
        }
    }
    det
}

/// Exhaustive count over all n x n matrices over F_q: (#GL_n(F_q), #those whose
/// top-left d x d minor is invertible).
pub fn residue_matrix_counts(n: usize, d: usize, q: u32) -> Result<(u64, u64)> {
    let gf = crate::k::gf(q)?;
    let cells = n * n;
    let total = (q as u64).checked_pow(cells as u32).filter(|&t| t <= 1 << 24).ok_or_else(|| {
        MvError::Unsupported(format!("enumerating {q}^{cells} matrices"))
    })?;
    let (mut gl, mut tr) = (0u64, 0u64);
    let mut digits = vec![0u16; cells];
    for _ in 0..total {
        let a: Vec<Vec<u16>> = digits.chunks(n).map(|r| r.to_vec()).collect();
        if residue_det(gf, &a) != 0 {
            gl += 1;
            let top: Vec<Vec<u16>> = a[..d].iter().map(|r| r[..d].to_vec()).collect();
            if d == 0 || residue_det(gf, &top) != 0 {
                tr += 1;
            }
        }
        for x in digits.iter_mut() {
            *x += 1;
            if *x as u32 == q {
                *x = 0;
            } else {
                break;
            }
        }
    }
    Ok((gl, tr))
}

/// Uniform element of GL_n(O/t^m): rejection on a singular residue matrix.
pub fn sample_gl(tr: &TruncatedRing, n: usize, rng: &mut ChaCha20Rng) -> Matrix {
    loop {
        let g: Matrix = (0..n).map(|_| (0..n).map(|_| tr.uniform(rng)).collect()).collect();
        let res: Vec<Vec<u16>> = g.iter().map(|row| row.iter().map(|x| x[0]).collect()).collect();
        if residue_det(tr.gf, &res) != 0 {
            return g;
        }
    }
}

/// Uniform vector of (O/t^m)^n.
pub fn sample_translation(tr: &TruncatedRing, n: usize, rng: &mut ChaCha20Rng) -> Vec<Trunc> {
    (0..n).map(|_| tr.uniform(rng)).collect()
}

/// Determinant over the truncated ring by cofactor expansion.
pub fn det(tr: &TruncatedRing, a: &[Vec<Trunc>]) -> Trunc {
    let n = a.len();
    if n == 0 {
        return tr.one();
    }
    if n == 1 {
        return a[0][0].clone();
    }
    let mut acc = tr.zero();
    for j in 0..n {
        let minor: Vec<Vec<Trunc>> =
            a[1..].iter().map(|row| row.iter().enumerate().filter(|(c, _)| *c != j).map(|(_, x)| x.clone()).collect()).collect();
        let term = tr.mul(&a[0][j], &det(tr, &minor));
        acc = if j % 2 == 0 { tr.add(&acc, &term) } else { tr.sub(&acc, &term) };
    }
    acc
}

/// Valuation of the top-left d x d minor.
pub fn det_val(tr: &TruncatedRing, g: &Matrix, d: usize) -> u32 {
    let sub: Vec<Vec<Trunc>> = g[..d].iter().map(|row| row[..d].to_vec()).collect();
    tr.val(&det(tr, &sub))
}

// ---------------------------------------------------------------------------
// counting

fn finite_field(c: &CellSet) -> Result<u32> {
    match c.field {
        Field::Q => Err(MvError::BaseFieldMismatch("counting needs a finite residue field".into())),
        Field::F(g) => Ok(g.q),
    }
}

/// Affine change of variables x -> t^{-s}(x - c), applied to every cell.
fn normalize(c: &CellSet) -> Result<(CellSet, i64)> {
    let Some(bb) = c.bounding_ball() else { return Ok((c.clone(), 0)) };
    let s = if bb.rad == i64::MAX { 0 } else { bb.rad.min(0) };
    let k = c.field;
    let scale = Ls::t_pow(k, -s);
    let cen = bb.center.clone();
    let map = |x: &Ls, i: usize| x.sub(&cen[i]).mul(&scale);
    let cells = c
        .cells
        .iter()
        .map(|cell| match cell {
            Cell::Point(p) => Cell::Point(p.iter().enumerate().map(|(i, x)| map(x, i)).collect()),
            Cell::Box(v) => Cell::Box(
                v.iter()
                    .enumerate()
                    .map(|(i, b)| BallSpec { center: map(&b.center, i), rad: b.rad.map(|r| r - s) })
                    .collect(),
            ),
            Cell::Graph(g) => {
                let (a, b) = g.axes();
                // u -> t^{-s}(f(c_a + t^s u) - c_b)
                let fu = g.f.substitute_affine(&cen[a], &Ls::t_pow(k, s));
                let mut cs: Vec<Ls> = fu.coeffs().to_vec();
                if cs.is_empty() {
                    cs.push(Ls::zero(k));
                }
                cs[0] = cs[0].sub(&cen[b]);
                let f: KPoly = Poly::new(cs.iter().map(|x| x.mul(&scale)).collect(), Ls::zero(k));
                Cell::Graph(GraphCell {
                    f,
                    center: map(&g.center, a),
                    rad: g.rad - s,
                    tube: g.tube.map(|t| t - s),
                    swap: g.swap,
                })
            }
        })
        .collect();
    Ok((CellSet { field: k, n: c.n, cells }, s))
}

/// Smallest depth at which images of the cells are determined.
pub fn stabilization_depth(c: &CellSet) -> i64 {
    let Ok((c, _)) = normalize(c) else { return 1 };
    let mut m = 0i64;
    let top = |x: &Ls| x.max_exp().unwrap_or(0);
    for cell in &c.cells {
        match cell {
            Cell::Point(p) => p.iter().for_each(|x| m = m.max(top(x))),
            Cell::Box(v) => {
                for b in v {
                    m = m.max(top(&b.center)).max(b.rad.unwrap_or(0));
                }
            }
            Cell::Graph(g) => {
                m = m.max(g.rad).max(g.tube.unwrap_or(0));
            }
        }
    }
    m + 1
}

/// Images mod t^m of the cells (after normalization); each cell contributes
/// its points, full-dimensional cells all their residues.
fn image(c: &CellSet, tr: &TruncatedRing) -> Result<HashSet<Vec<Trunc>>> {
    let mut out = HashSet::new();
    for cell in &c.cells {
        match cell {
            Cell::Point(p) => {
                out.insert(p.iter().map(|x| tr.from_ls(x)).collect::<Result<Vec<_>>>()?);
            }
            Cell::Box(v) => {
                let mut acc: Vec<Vec<Trunc>> = vec![vec![]];
                for b in v {
                    let c = tr.from_ls(&b.center)?;
                    let opts = tr.ball(&c, b.rad.unwrap_or(i64::MAX));
                    acc = acc
                        .into_iter()
                        .flat_map(|pre| {
                            opts.iter().map(move |o| {
                                let mut p = pre.clone();
                                p.push(o.clone());
                                p
                            })
                        })
                        .collect();
                }
                out.extend(acc);
            }
            Cell::Graph(g) => {
                let (a, b) = g.axes();
                for x in tr.ball(&tr.from_ls(&g.center)?, g.rad) {
                    let xs = tr.to_ls(&x);
                    let y = tr.from_ls(&g.f.eval(&xs))?;
                    for yy in tr.ball(&y, g.tube.unwrap_or(i64::MAX)) {
                        let mut p = vec![vec![]; 2];
                        p[a] = x.clone();
                        p[b] = yy;
                        out.insert(p);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// #(image of X in (O/t^m)^n) / q^{m d}, d = dim X, after recentering.
pub fn count_measure(c: &CellSet, m: u32) -> Result<BigRational> {
    let q = finite_field(c)?;
    let d = c.dim();
    if d == 0 {
        return Ok(BigRational::from_integer(BigInt::from(c.points().map_or(0, |p| p.len()))));
    }
    let need = stabilization_depth(c);
    if (m as i64) < need {
        return Err(MvError::DepthTooSmall { required: need });
    }
    let (cs, s) = normalize(c)?;
    let tr = TruncatedRing::new(q, m)?;
    let cells: Vec<Cell> = cs.cells.iter().filter(|x| x.dim() == d).cloned().collect();
    let img = image(&CellSet { cells, ..cs }, &tr)?;
    let qb = BigInt::from(q);
    // scaling by t^s multiplies mu_d by q^{-s d}
    let num = BigInt::from(img.len());
    let den = qb.pow(m * d as u32);
    let r = BigRational::new(num, den);
    Ok(scale_q(r, q, -s * d as i64))
}

fn scale_q(r: BigRational, q: u32, e: i64) -> BigRational {
    let qb = BigInt::from(q);
    if e >= 0 {
        r * BigRational::from_integer(qb.pow(e as u32))
    } else {
        r / BigRational::from_integer(qb.pow((-e) as u32))
    }
}

/// mu_n(T_r(X)) by counting: T_r(X) = X + (t^r O)^n, so the count is #(X mod t^r) / q^{n r}.
pub fn count_tube(c: &CellSet, r: i64, m: u32) -> Result<BigRational> {
    let q = finite_field(c)?;
    if r < 0 {
        return Err(MvError::DomainError("r must be nonnegative".into()));
    }
    let need = stabilization_depth(c).max(r + 1);
    if (m as i64) < need {
        return Err(MvError::DepthTooSmall { required: need });
    }
    let (cs, s) = normalize(c)?;
    // radius r in the original coordinates is r - s after scaling
    let rr = r - s;
    let n = c.n as u32;
    if rr <= 0 {
        // X lies in one ball of radius s >= r, so the tube is the ball of radius r
        return Ok(if cs.cells.is_empty() {
            BigRational::from_integer(0.into())
        } else {
            scale_q(BigRational::from_integer(1.into()), q, -r * n as i64)
        });
    }
    let tr = TruncatedRing::new(q, m)?;
    let img = image(&cs, &tr)?;
    let reduced: HashSet<Vec<Trunc>> =
        img.into_iter().map(|p| p.into_iter().map(|x| x[..rr as usize].to_vec()).collect()).collect();
    let qb = BigInt::from(q);
    let r0 = BigRational::new(BigInt::from(reduced.len()), qb.pow(rr as u32 * n));
    Ok(scale_q(r0, q, -s * n as i64))
}

/// Exhaustive cross-check for tiny cases: every point of (O/t^m)^n is tested
/// against the image of X mod t^r. Limited to n*m <= 24 and q = 2.
pub fn count_tube_full(c: &CellSet, r: i64, m: u32) -> Result<BigRational> {
    let q = finite_field(c)?;
    let n = c.n as u32;
    if n * m > 24 || q.pow(n * m) > 1 << 24 {
        return Err(MvError::Unsupported("full enumeration beyond 2^24 points".into()));
    }
    let (cs, s) = normalize(c)?;
    if s != 0 || r < 1 || r as u32 >= m {
        return Err(MvError::Unsupported("full enumeration needs X in O^n and 0 < r < m".into()));
    }
    let tr = TruncatedRing::new(q, m)?;
    let img = image(&cs, &tr)?;
    let mut hits = 0u64;
    let total = (q as u64).pow(n * m);
    for code in 0..total {
        let mut x = code;
        let mut pt: Vec<Trunc> = vec![];
        for _ in 0..n {
            let mut v = vec![];
            for _ in 0..m {
                v.push((x % q as u64) as u16);
                x /= q as u64;
            }
            pt.push(v);
        }
        if img.iter().any(|p| p.iter().zip(&pt).all(|(a, b)| tr.val(&tr.sub(a, b)) as i64 >= r)) {
            hits += 1;
        }
    }
    Ok(BigRational::new(BigInt::from(hits), BigInt::from(total)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::{lower, parse_set};

    fn set(text: &str, q: u32) -> CellSet {
        let k = Field::finite(q).unwrap();
        lower(&parse_set(text, k).unwrap(), k).unwrap()
    }
    fn rat(a: i64, b: i64) -> BigRational {
        BigRational::new(a.into(), b.into())
    }

    #[test]
    fn normalization_counts() {
        let mk = set("box(B(0,1))", 2);
        for m in 2..=4 {
            assert_eq!(count_measure(&mk, m).unwrap(), rat(1, 2));
        }
        assert_eq!(count_measure(&set("box(B(0,0), B(0,0))", 3), 3).unwrap(), rat(1, 1));
        assert_eq!(count_measure(&set("graph(y = x^2, x in B(0,0))", 3), 4).unwrap(), rat(1, 1));
        assert!(matches!(count_measure(&set("graph(y = x^2, x in B(0,3))", 3), 2), Err(MvError::DepthTooSmall { .. })));
        let kq = Field::Q;
        let xq = lower(&parse_set("box(B(0,1))", kq).unwrap(), kq).unwrap();
        assert!(matches!(count_measure(&xq, 3), Err(MvError::BaseFieldMismatch(_))));
    }

    #[test]
    fn tube_counts() {
        let line = set("graph(y = 0, x in B(0,0))", 2);
        assert_eq!(count_tube(&line, 2, 4).unwrap(), rat(1, 4));
        let full = set("box(B(0,0), B(0,0))", 2);
        assert_eq!(count_tube(&full, 0, 2).unwrap(), rat(1, 1));
        // fast path against exhaustive enumeration
        let two = set("graph(y = 0, x in B(0,0)) | graph(y = t*x, x in B(0,0))", 2);
        for r in 1..4 {
            assert_eq!(count_tube(&two, r, 5).unwrap(), count_tube_full(&two, r, 5).unwrap());
        }
    }

    #[test]
    fn depth_stability() {
        let par = set("graph(y = x^2, x in B(0,0)) | point(t, 1)", 3);
        for r in 0..3 {
            let a = count_tube(&par, r, 4).unwrap();
            assert_eq!(a, count_tube(&par, r, 5).unwrap());
            assert_eq!(a, count_tube(&par, r, 6).unwrap());
        }
    }

    #[test]
    fn monotone_counts() {
        let small = set("graph(y = x^2, x in B(0,1))", 2);
        let big = set("graph(y = x^2, x in B(0,0))", 2);
        for r in 0..4 {
            assert!(count_tube(&small, r, 6).unwrap() <= count_tube(&big, r, 6).unwrap());
        }
    }

    #[test]
    fn gl_sampling() {
        let tr = TruncatedRing::new(3, 1).unwrap();
        // n = 1: units with rate (q-1)/q measured through the rejection count
        let mut rng = stream_rng(1, 0);
        let mut tries = 0u64;
        let mut accepted = 0u64;
        for _ in 0..10_000 {
            let x = tr.uniform(&mut rng);
            tries += 1;
            if tr.is_unit(&x) {
                accepted += 1;
            }
        }
        let rate = accepted as f64 / tries as f64;
        assert!((rate - 2.0 / 3.0).abs() < 0.02);
        // n = 2: invertibility rate matches #GL_2(F_3)/3^4 = 48/81
        let mut ok = 0;
        for _ in 0..10_000 {
            let g: Vec<Vec<u16>> = (0..2).map(|_| (0..2).map(|_| uniform_below(&mut rng, 3) as u16).collect()).collect();
            if residue_det(tr.gf, &g) != 0 {
                ok += 1;
            }
        }
        assert!((ok as f64 / 10_000.0 - 48.0 / 81.0).abs() < 0.02);
        let g = sample_gl(&tr, 1, &mut rng);
        assert!(tr.is_unit(&g[0][0]));
    }

    #[test]
    fn streams_reproducible() {
        let tr = TruncatedRing::new(5, 4).unwrap();
        let a: Vec<Matrix> = (0..5).map(|_| sample_gl(&tr, 2, &mut stream_rng(42, 3))).collect();
        let b: Vec<Matrix> = (0..5).map(|_| sample_gl(&tr, 2, &mut stream_rng(42, 3))).collect();
        assert_eq!(a, b);
        let x = par_chunks(10_000, 9, |rng, n| (0..n).map(|_| rng.next_u32() as u64).sum::<u64>());
        std::env::set_var("MV_THREADS", "1");
        let y = par_chunks(10_000, 9, |rng, n| (0..n).map(|_| rng.next_u32() as u64).sum::<u64>());
        std::env::remove_var("MV_THREADS");
        assert_eq!(x, y);
    }

    #[test]
    fn residue_counts() {
        assert_eq!(residue_matrix_counts(2, 1, 2).unwrap(), (6, 4));
        assert_eq!(residue_matrix_counts(2, 1, 3).unwrap(), (48, 36));
        assert_eq!(residue_matrix_counts(2, 2, 3).unwrap(), (48, 48));
    }

    #[test]
    fn exhaustive_gl2() {
        // #GL_2(F_q) and the top-left-unit count
        for q in [2u32, 3, 5] {
            let gf = crate::k::gf(q).unwrap();
            let (mut gl, mut top) = (0, 0);
            for code in 0..q.pow(4) {
                let e: Vec<u16> = (0..4).map(|i| ((code / q.pow(i)) % q) as u16).collect();
                let m = vec![vec![e[0], e[1]], vec![e[2], e[3]]];
                if residue_det(gf, &m) != 0 {
                    gl += 1;
                    if e[0] != 0 {
                        top += 1;
                    }
                }
            }
            assert_eq!(gl, (q * q - 1) * (q * q - q));
            assert_eq!(top, (q - 1) * (q - 1) * q * q);
        }
    }
}
