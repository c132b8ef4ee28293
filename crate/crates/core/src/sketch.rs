//! Complementary sketching of two-sample regression data.
//!
//! Given designs `X1` (n1×p), `X2` (n2×p) and responses `Y1`, `Y2`, the sketch
//! takes an orthonormal basis `A = (A1; A2)` of the orthogonal complement of
//! the column space of the stacked design and forms
//!
//! ```text
//! Z = A1ᵀY1 + A2ᵀY2        W = A1ᵀX1 − A2ᵀX2
//! ```
//!
//! so that `Z = Wθ + ξ` with `θ = (β1 − β2)/2` and the nuisance `(β1 + β2)/2`
//! eliminated. Everything the tests consume (`WᵀZ`, `diag(WᵀW)`, `‖Z‖²`)
//! depends on `A` only through `AAᵀ`, which is what [`SketchSummary`] holds.

use faer::linalg::solvers::Solve;
use faer::{Col, ColRef, Mat, MatRef, Side};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;
use crate::seeding;

/// Relative singular-value cutoff used to decide numerical rank.
pub const RANK_CUTOFF: f64 = 1e-10;
/// Attempts at drawing a Gaussian matrix whose projection has full rank.
pub const BASIS_ATTEMPTS: u64 = 3;

/// Raw inputs of the two-sample regression model.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoSampleData {
    x1: Mat<f64>,
    x2: Mat<f64>,
    y1: Col<f64>,
    y2: Col<f64>,
}

impl TwoSampleData {
    pub fn new(x1: Mat<f64>, y1: Col<f64>, x2: Mat<f64>, y2: Col<f64>) -> Result<Self> {
        if x1.ncols() != x2.ncols() {
            return Err(Error::Dimension(format!(
                "X1 has {} columns but X2 has {} columns",
                x1.ncols(),
                x2.ncols()
            )));
        }
        if x1.nrows() != y1.nrows() {
            return Err(Error::Dimension(format!(
                "X1 has {} rows but Y1 has length {}",
                x1.nrows(),
                y1.nrows()
            )));
        }
        if x2.nrows() != y2.nrows() {
            return Err(Error::Dimension(format!(
                "X2 has {} rows but Y2 has length {}",
                x2.nrows(),
                y2.nrows()
            )));
        }
        if x1.ncols() == 0 {
            return Err(Error::Dimension("designs have no columns".into()));
        }
        if x1.nrows() + x2.nrows() <= x1.ncols() {
            return Err(Error::Dimension(format!(
                "n1 + n2 = {} must exceed p = {}",
                x1.nrows() + x2.nrows(),
                x1.ncols()
            )));
        }
        if !linalg::all_finite(x1.as_ref()) {
            return Err(Error::NonFinite("X1"));
        }
        if !linalg::all_finite(x2.as_ref()) {
            return Err(Error::NonFinite("X2"));
        }
        if !y1.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("Y1"));
        }
        if !y2.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("Y2"));
        }
        Ok(Self { x1, x2, y1, y2 })
    }

    /// Builds from row-major nested vectors; mostly for tests and CSV input.
    pub fn from_rows(x1: &[Vec<f64>], y1: &[f64], x2: &[Vec<f64>], y2: &[f64]) -> Result<Self> {
        Self::new(
            rows_to_mat(x1, "X1")?,
            Col::from_fn(y1.len(), |i| y1[i]),
            rows_to_mat(x2, "X2")?,
            Col::from_fn(y2.len(), |i| y2[i]),
        )
    }

    pub fn n1(&self) -> usize {
        self.x1.nrows()
    }
    pub fn n2(&self) -> usize {
        self.x2.nrows()
    }
    pub fn n(&self) -> usize {
        self.n1() + self.n2()
    }
    pub fn p(&self) -> usize {
        self.x1.ncols()
    }
    /// Sketch dimension `n1 + n2 − p`.
    pub fn m(&self) -> usize {
        self.n() - self.p()
    }
    pub fn x1(&self) -> MatRef<'_, f64> {
        self.x1.as_ref()
    }
    pub fn x2(&self) -> MatRef<'_, f64> {
        self.x2.as_ref()
    }
    pub fn y1(&self) -> ColRef<'_, f64> {
        self.y1.as_ref()
    }
    pub fn y2(&self) -> ColRef<'_, f64> {
        self.y2.as_ref()
    }

    pub fn stacked_design(&self) -> Mat<f64> {
        linalg::vstack(self.x1.as_ref(), self.x2.as_ref())
    }

    pub fn stacked_response(&self) -> Col<f64> {
        linalg::concat(self.y1.as_ref(), self.y2.as_ref())
    }

    /// Same designs, responses multiplied by `c`.
    pub fn with_scaled_response(&self, c: f64) -> Self {
        Self {
            x1: self.x1.clone(),
            x2: self.x2.clone(),
            y1: Col::from_fn(self.n1(), |i| c * self.y1[i]),
            y2: Col::from_fn(self.n2(), |i| c * self.y2[i]),
        }
    }

    /// Splits off the first `rows1`/`rows2` rows of each sample.
    pub(crate) fn split_rows(&self, rows1: usize, rows2: usize) -> (Self, Self) {
        let take = |x: &Mat<f64>, y: &Col<f64>, lo: usize, hi: usize| {
            (
                x.as_ref().subrows(lo, hi - lo).to_owned(),
                Col::from_fn(hi - lo, |i| y[lo + i]),
            )
        };
        let (a1, b1) = take(&self.x1, &self.y1, 0, rows1);
        let (a2, b2) = take(&self.x2, &self.y2, 0, rows2);
        let (c1, d1) = take(&self.x1, &self.y1, rows1, self.n1());
        let (c2, d2) = take(&self.x2, &self.y2, rows2, self.n2());
        (
            Self { x1: a1, y1: b1, x2: a2, y2: b2 },
            Self { x1: c1, y1: d1, x2: c2, y2: d2 },
        )
    }
}

fn rows_to_mat(rows: &[Vec<f64>], what: &str) -> Result<Mat<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != ncols) {
        return Err(Error::Dimension(format!(
            "{what} row {i} has {} entries, expected {ncols}",
            r.len()
        )));
    }
    Ok(Mat::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

/// Reported when the design has numerical rank below its column count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RankDeficiency {
    pub rank: usize,
    pub columns: usize,
}

/// Orthonormal basis of the orthogonal complement of `col(X)`.
#[derive(Debug, Clone)]
pub struct NullSpace {
    pub basis: Mat<f64>,
    pub rank: usize,
    pub deficiency: Option<RankDeficiency>,
}

/// Column-space basis and numerical rank of `x`, via QR then an SVD of `R`.
fn column_space(x: MatRef<'_, f64>) -> Result<(Mat<f64>, usize)> {
    let (n, p) = (x.nrows(), x.ncols());
    let qr = x.qr();
    let q = qr.compute_thin_Q();
    let r = qr.thin_R().to_owned();
    let k = n.min(p);
    let svd = r
        .thin_svd()
        .map_err(|e| Error::Numerical(format!("SVD of R failed: {e:?}")))?;
    let sv: Vec<f64> = (0..k).map(|i| svd.S()[i]).collect();
    let rank = linalg::numerical_rank(&sv, RANK_CUTOFF);
    // X = Q R = (Q U_R) Σ Vᵀ, so the leading left singular vectors are Q·U_R
    let u = &q * svd.U();
    Ok((u.as_ref().subcols(0, rank).to_owned(), rank))
}

/// Draws `M` with i.i.d. standard normal entries, projects it onto the
/// complement of `col(X)` and orthonormalises it by QR.
///
/// Returns an `n × (n − rank X)` matrix `A` with `AᵀA = I` and `AᵀX = 0`.
pub fn null_space_basis(x: MatRef<'_, f64>, seed: u64) -> Result<NullSpace> {
    let (n, p) = (x.nrows(), x.ncols());
    if !linalg::all_finite(x) {
        return Err(Error::NonFinite("design"));
    }
    let (u, rank) = column_space(x)?;
    let m = n - rank;
    if m == 0 {
        return Err(Error::Dimension(format!(
            "null space is empty: n = {n}, rank = {rank}"
        )));
    }
    let deficiency = (rank < p).then(|| {
        log::warn!("design has numerical rank {rank} < p = {p}; sketch dimension is {m}");
        RankDeficiency { rank, columns: p }
    });

    for attempt in 0..BASIS_ATTEMPTS {
        let mut rng = seeding::rng_from_seed(seed.wrapping_add(attempt));
        let mut mt = linalg::gaussian_matrix(n, m, &mut rng);
        let coef = u.transpose() * &mt;
        mt -= &u * &coef;

        let qr = mt.qr();
        let r = qr.thin_R();
        let diag: Vec<f64> = (0..m).map(|i| r[(i, i)].abs()).collect();
        let top = diag.iter().cloned().fold(0.0f64, f64::max);
        let low = diag.iter().cloned().fold(f64::INFINITY, f64::min);
        if top > 0.0 && low > RANK_CUTOFF * top {
            return Ok(NullSpace {
                basis: qr.compute_thin_Q(),
                rank,
                deficiency,
            });
        }
        log::debug!("projected Gaussian draw was rank deficient, redrawing (attempt {attempt})");
    }
    Err(Error::Numerical(format!(
        "projected Gaussian matrix rank deficient after {BASIS_ATTEMPTS} draws"
    )))
}

/// The sketched one-sample problem `(W, Z)`.
#[derive(Debug, Clone)]
pub struct Sketch {
    pub w: Mat<f64>,
    pub z: Col<f64>,
    pub m: usize,
    pub col_norms: Vec<f64>,
    pub deficiency: Option<RankDeficiency>,
}

impl Sketch {
    pub fn p(&self) -> usize {
        self.w.ncols()
    }

    pub fn summary(&self) -> SketchSummary {
        let wtz = self.w.transpose() * &self.z;
        SketchSummary {
            m: self.m,
            wtz: wtz.iter().copied().collect(),
            col_sq_norms: self.col_norms.iter().map(|c| c * c).collect(),
            z_sq_norm: linalg::sq_norm(self.z.as_ref()),
        }
    }
}

/// Forms the complementary sketch of `data` using a basis drawn from `seed`.
pub fn complementary_sketch(data: &TwoSampleData, seed: u64) -> Result<Sketch> {
    let x = data.stacked_design();
    let ns = null_space_basis(x.as_ref(), seed)?;
    let n1 = data.n1();
    let a1 = ns.basis.as_ref().subrows(0, n1);
    let a2 = ns.basis.as_ref().subrows(n1, data.n2());

    let z = a1.transpose() * data.y1() + a2.transpose() * data.y2();
    let w = a1.transpose() * data.x1() - a2.transpose() * data.x2();
    let col_norms = linalg::col_sq_norms(w.as_ref())
        .into_iter()
        .map(f64::sqrt)
        .collect();
    Ok(Sketch {
        m: ns.basis.ncols(),
        w,
        z,
        col_norms,
        deficiency: ns.deficiency,
    })
}

/// Basis-free sufficient statistics of a sketch: `WᵀZ`, `diag(WᵀW)`, `‖Z‖²`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SketchSummary {
    pub m: usize,
    pub wtz: Vec<f64>,
    pub col_sq_norms: Vec<f64>,
    pub z_sq_norm: f64,
}

impl SketchSummary {
    pub fn p(&self) -> usize {
        self.wtz.len()
    }
}

/// Computes [`SketchSummary`] without materialising `A`.
///
/// With `P = I − X X⁺` and `D = diag(I_{n1}, −I_{n2})`, `AAᵀ = P`, so
/// `WᵀZ = (DX)ᵀ P Y`, `‖Z‖² = Yᵀ P Y` and `diag(WᵀW)_j = ‖P D X_j‖²`.
/// The last is evaluated as `4(‖X1_j‖² − ‖Q1ᵀX1_j‖²)` where `Q1` is the top
/// block of the thin `Q` factor (since `P D X = 2 P (X1; 0)`).
pub fn project_summary(data: &TwoSampleData) -> Result<SketchSummary> {
    let (n1, n2, p) = (data.n1(), data.n2(), data.p());
    let x = data.stacked_design();
    let qr = x.qr();
    let r = qr.thin_R();
    let diag: Vec<f64> = (0..p).map(|i| r[(i, i)].abs()).collect();
    let top = diag.iter().cloned().fold(0.0f64, f64::max);
    if diag.iter().any(|&d| d <= RANK_CUTOFF * top) {
        return Err(Error::Numerical(
            "stacked design is numerically rank deficient; use the explicit sketch".into(),
        ));
    }
    let q = qr.compute_thin_Q();
    let y = data.stacked_response();
    let coef = q.transpose() * &y;
    let resid = &y - &q * &coef;

    let r1 = resid.as_ref().subrows(0, n1);
    let r2 = resid.as_ref().subrows(n1, n2);
    let wtz = data.x1().transpose() * r1 - data.x2().transpose() * r2;

    let q1 = q.as_ref().subrows(0, n1);
    let proj = q1.transpose() * data.x1();
    let raw = linalg::col_sq_norms(data.x1());
    let captured = linalg::col_sq_norms(proj.as_ref());
    let col_sq_norms = raw
        .iter()
        .zip(&captured)
        .map(|(a, b)| (4.0 * (a - b)).max(0.0))
        .collect();

    Ok(SketchSummary {
        m: data.m(),
        wtz: wtz.iter().copied().collect(),
        col_sq_norms,
        z_sq_norm: linalg::sq_norm(resid.as_ref()),
    })
}

fn gram(x: MatRef<'_, f64>) -> Mat<f64> {
    x.transpose() * x
}

/// Closed form of the sketched Gram matrix: `WᵀW = 4 G1 (G1 + G2)⁻¹ G2`
/// with `G_i = X_iᵀX_i`.
pub fn gram_oracle(x1: MatRef<'_, f64>, x2: MatRef<'_, f64>) -> Result<Mat<f64>> {
    check_blocks(x1, x2)?;
    let g1 = gram(x1);
    let g2 = gram(x2);
    let g = &g1 + &g2;
    let llt = g
        .llt(Side::Lower)
        .map_err(|_| Error::Singular("XᵀX is not positive definite".into()))?;
    let s = llt.solve(&g2);
    Ok(4.0 * (&g1 * &s))
}

/// Decoupled form of the same Gram matrix: with `L = (G1+G2)⁻¹(G2−G1)`,
/// `X̃1 = X1(L+I)` and `X̃2 = X2(L−I)`, returns `X̃1ᵀX̃1 + X̃2ᵀX̃2`.
pub fn decoupled_gram_oracle(x1: MatRef<'_, f64>, x2: MatRef<'_, f64>) -> Result<Mat<f64>> {
    check_blocks(x1, x2)?;
    let p = x1.ncols();
    let g1 = gram(x1);
    let g2 = gram(x2);
    let g = &g1 + &g2;
    let llt = g
        .llt(Side::Lower)
        .map_err(|_| Error::Singular("G1 + G2 is not positive definite".into()))?;
    let l = llt.solve(&g2 - &g1);
    let eye = Mat::<f64>::identity(p, p);
    let xt1 = x1 * (&l + &eye);
    let xt2 = x2 * (&l - &eye);
    Ok(gram(xt1.as_ref()) + gram(xt2.as_ref()))
}

fn check_blocks(x1: MatRef<'_, f64>, x2: MatRef<'_, f64>) -> Result<()> {
    if x1.ncols() != x2.ncols() {
        return Err(Error::Dimension(format!(
            "X1 has {} columns but X2 has {} columns",
            x1.ncols(),
            x2.ncols()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{gaussian_matrix, max_abs, max_abs_diff};

    fn seeded_data(n1: usize, n2: usize, p: usize, seed: u64) -> TwoSampleData {
        let mut rng = seeding::rng_from_seed(seed);
        let x1 = gaussian_matrix(n1, p, &mut rng);
        let x2 = gaussian_matrix(n2, p, &mut rng);
        let y1 = gaussian_matrix(n1, 1, &mut rng).col(0).to_owned();
        let y2 = gaussian_matrix(n2, 1, &mut rng).col(0).to_owned();
        TwoSampleData::new(x1, y1, x2, y2).unwrap()
    }

    fn check_basis(x: MatRef<'_, f64>, a: MatRef<'_, f64>) {
        let ata = a.transpose() * a;
        let eye = Mat::<f64>::identity(a.ncols(), a.ncols());
        assert!(max_abs_diff(ata.as_ref(), eye.as_ref()) <= 1e-10);
        let atx = a.transpose() * x;
        assert!(max_abs(atx.as_ref()) <= 1e-8 * max_abs(x));
    }

    #[test]
    fn basis_of_coordinate_axis_complement() {
        let x = Mat::from_fn(2, 1, |i, _| if i == 0 { 1.0 } else { 0.0 });
        let ns = null_space_basis(x.as_ref(), 3).unwrap();
        assert_eq!(ns.basis.ncols(), 1);
        assert!(ns.basis[(0, 0)].abs() < 1e-14);
        assert!((ns.basis[(1, 0)].abs() - 1.0).abs() < 1e-14);
        check_basis(x.as_ref(), ns.basis.as_ref());
    }

    #[test]
    fn square_invertible_design_has_no_complement() {
        let x = Mat::from_fn(3, 3, |i, j| if i == j { 2.0 } else { 0.5 });
        assert!(matches!(
            null_space_basis(x.as_ref(), 0),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn seeded_gaussian_basis_is_orthonormal_and_annihilating() {
        let mut rng = seeding::rng_from_seed(11);
        let x = gaussian_matrix(8, 3, &mut rng);
        let ns = null_space_basis(x.as_ref(), 5).unwrap();
        assert_eq!((ns.basis.nrows(), ns.basis.ncols()), (8, 5));
        assert!(ns.deficiency.is_none());
        check_basis(x.as_ref(), ns.basis.as_ref());
    }

    #[test]
    fn rank_deficient_design_is_reported() {
        let mut rng = seeding::rng_from_seed(2);
        let mut x = gaussian_matrix(7, 3, &mut rng);
        for i in 0..7 {
            x[(i, 2)] = x[(i, 0)] - 2.0 * x[(i, 1)];
        }
        let ns = null_space_basis(x.as_ref(), 1).unwrap();
        assert_eq!(ns.rank, 2);
        assert_eq!(ns.deficiency, Some(RankDeficiency { rank: 2, columns: 3 }));
        assert_eq!(ns.basis.ncols(), 5);
        check_basis(x.as_ref(), ns.basis.as_ref());
    }

    #[test]
    fn noiseless_null_is_annihilated() {
        let mut rng = seeding::rng_from_seed(8);
        let x1 = gaussian_matrix(6, 3, &mut rng);
        let x2 = gaussian_matrix(5, 3, &mut rng);
        let beta = Col::from_fn(3, |i| 1.0 + i as f64);
        let y1 = &x1 * &beta;
        let y2 = &x2 * &beta;
        let norm = linalg::sq_norm(y1.as_ref()).sqrt() + linalg::sq_norm(y2.as_ref()).sqrt();
        let data = TwoSampleData::new(x1, y1, x2, y2).unwrap();
        let sk = complementary_sketch(&data, 4).unwrap();
        assert_eq!(sk.m, 8);
        assert!(linalg::sq_norm(sk.z.as_ref()).sqrt() <= 1e-8 * norm);
    }

    #[test]
    fn sketch_gram_matches_closed_form() {
        let data = seeded_data(4, 4, 2, 21);
        let sk = complementary_sketch(&data, 9).unwrap();
        let wtw = sk.w.transpose() * &sk.w;
        let oracle = gram_oracle(data.x1(), data.x2()).unwrap();
        let scale = max_abs(oracle.as_ref());
        assert!(max_abs_diff(wtw.as_ref(), oracle.as_ref()) <= 1e-8 * scale);
    }

    #[test]
    fn sketch_statistics_do_not_depend_on_basis_seed() {
        let data = seeded_data(4, 4, 2, 33);
        let a = complementary_sketch(&data, 1).unwrap().summary();
        let b = complementary_sketch(&data, 999).unwrap().summary();
        assert!((a.z_sq_norm - b.z_sq_norm).abs() <= 1e-8 * a.z_sq_norm);
        for j in 0..2 {
            assert!((a.wtz[j] - b.wtz[j]).abs() <= 1e-8 * a.wtz[j].abs().max(1.0));
            assert!((a.col_sq_norms[j] - b.col_sq_norms[j]).abs() <= 1e-8 * a.col_sq_norms[j]);
        }
    }

    #[test]
    fn projection_route_matches_explicit_sketch() {
        let data = seeded_data(9, 7, 4, 5);
        let a = complementary_sketch(&data, 3).unwrap().summary();
        let b = project_summary(&data).unwrap();
        assert_eq!(a.m, b.m);
        assert!((a.z_sq_norm - b.z_sq_norm).abs() <= 1e-10 * a.z_sq_norm);
        for j in 0..4 {
            assert!((a.wtz[j] - b.wtz[j]).abs() <= 1e-9 * a.wtz[j].abs().max(1.0));
            assert!((a.col_sq_norms[j] - b.col_sq_norms[j]).abs() <= 1e-9 * a.col_sq_norms[j]);
        }
    }

    #[test]
    fn gram_oracle_trivial_cases() {
        let mut rng = seeding::rng_from_seed(4);
        let x1 = gaussian_matrix(5, 2, &mut rng);
        let zero = Mat::<f64>::zeros(3, 2);
        let g = gram_oracle(x1.as_ref(), zero.as_ref()).unwrap();
        assert!(max_abs(g.as_ref()) < 1e-12);
        let d = decoupled_gram_oracle(x1.as_ref(), zero.as_ref()).unwrap();
        assert!(max_abs(d.as_ref()) < 1e-10);

        // X1ᵀX1 = X2ᵀX2 = I → 2I
        let e = Mat::<f64>::identity(3, 3);
        let g = gram_oracle(e.as_ref(), e.as_ref()).unwrap();
        let two = 2.0 * Mat::<f64>::identity(3, 3);
        assert!(max_abs_diff(g.as_ref(), two.as_ref()) < 1e-14);
    }

    #[test]
    fn decoupled_oracle_symmetric_case() {
        let mut rng = seeding::rng_from_seed(6);
        let x = gaussian_matrix(6, 3, &mut rng);
        let g1 = x.transpose() * &x;
        let d = decoupled_gram_oracle(x.as_ref(), x.as_ref()).unwrap();
        let g = gram_oracle(x.as_ref(), x.as_ref()).unwrap();
        let twice = 2.0 * &g1;
        let scale = max_abs(twice.as_ref());
        assert!(max_abs_diff(d.as_ref(), twice.as_ref()) <= 1e-10 * scale);
        assert!(max_abs_diff(g.as_ref(), twice.as_ref()) <= 1e-10 * scale);
    }

    #[test]
    fn singular_gram_is_an_error() {
        let zero = Mat::<f64>::zeros(3, 2);
        assert!(matches!(
            gram_oracle(zero.as_ref(), zero.as_ref()),
            Err(Error::Singular(_))
        ));
    }

    #[test]
    fn data_validation() {
        let x1 = Mat::<f64>::zeros(3, 2);
        let x2 = Mat::<f64>::zeros(3, 3);
        let err = TwoSampleData::new(x1, Col::zeros(3), x2, Col::zeros(3)).unwrap_err();
        assert!(err.to_string().contains('2') && err.to_string().contains('3'));

        let x1 = Mat::<f64>::zeros(1, 3);
        let x2 = Mat::<f64>::zeros(2, 3);
        assert!(TwoSampleData::new(x1, Col::zeros(1), x2, Col::zeros(2)).is_err());

        let mut x1 = Mat::<f64>::zeros(3, 1);
        x1[(0, 0)] = f64::NAN;
        assert!(matches!(
            TwoSampleData::new(x1, Col::zeros(3), Mat::zeros(2, 1), Col::zeros(2)),
            Err(Error::NonFinite("X1"))
        ));
    }
}
