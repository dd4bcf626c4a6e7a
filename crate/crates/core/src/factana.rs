//! Guided factor analysis.
//!
//! Extraction runs in two passes over the mean-centered sequence `X`:
//!
//! * the jaw factor comes from the jaw-only covariance, pushed through the
//!   covariance of the jaw∪tongue∪lip union so that it absorbs the motion
//!   the jaw drags along: `F_jaw = C_union·q₁(C_jaw)·λ₁(C_jaw)^{-1/2}`;
//! * the jaw component is projected out, `X_other = (I − F_jaw F_jaw⁺)·X`,
//!   and each remaining articulator takes the first principal component of
//!   its masked jaw-free covariance, scaled by `√λ₁`.
//!
//! All covariances are spatial (`X·Xᵀ`, 2p×2p) and unscaled. Factor scores
//! are the least-squares coefficients `Y = (F⁺·X)ᵀ`.

use thiserror::Error;

use crate::contour::{ArticulatorId, ArticulatorMap, ContourSequence};
use crate::numkit::{dot, norm2, pinv, svd, sym_eig, Mat, NumError};

/// Eigenvalues at or below this are treated as no motion at all.
pub const DEGENERATE_EIGENVALUE: f64 = 1e-12;

/// Off-support magnitude tolerated by [`FactorSet::check_support`].
pub const SUPPORT_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FactorError {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("degenerate motion: {art} has largest covariance eigenvalue {lambda:e}")]
    DegenerateMotion { art: ArticulatorId, lambda: f64 },
    #[error("factor matrix is rank deficient (singular values {smallest:e} vs {largest:e})")]
    RankDeficient { smallest: f64, largest: f64 },
    #[error("factor support violated: {0}")]
    Support(String),
    #[error(transparent)]
    Num(#[from] NumError),
}

pub type Result<T> = std::result::Result<T, FactorError>;

const UNION: [ArticulatorId; 3] = [
    ArticulatorId::Jaw,
    ArticulatorId::Tongue,
    ArticulatorId::Lip,
];

/// Spatial factors, one column per articulator in canonical order.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorSet {
    f: Mat,
}

impl FactorSet {
    pub fn new(f: Mat) -> Result<Self> {
        if f.cols() != ArticulatorId::ALL.len() {
            return Err(FactorError::Dimension(format!(
                "factor matrix has {} columns, need 5",
                f.cols()
            )));
        }
        if !f.rows().is_multiple_of(2) {
            return Err(FactorError::Dimension(format!(
                "odd coordinate count {}",
                f.rows()
            )));
        }
        if !f.is_finite() {
            return Err(FactorError::Argument("non-finite factor entries".into()));
        }
        Ok(Self { f })
    }

    pub fn matrix(&self) -> &Mat {
        &self.f
    }

    pub fn column(&self, art: ArticulatorId) -> Vec<f64> {
        self.f.col(art.index())
    }

    /// Verifies that each column lives on its articulator's coordinates (the
    /// jaw column on jaw∪tongue∪lip) and that no column vanishes.
    pub fn check_support(&self, map: &ArticulatorMap) -> Result<()> {
        if self.f.rows() != 2 * map.p() {
            return Err(FactorError::Dimension(format!(
                "{} factor rows for {} vertices",
                self.f.rows(),
                map.p()
            )));
        }
        for art in ArticulatorId::ALL {
            let allowed = support_rows(map, art);
            let col = self.column(art);
            for (r, v) in col.iter().enumerate() {
                if v.abs() > SUPPORT_TOLERANCE && !allowed[r] {
                    return Err(FactorError::Support(format!(
                        "{art} factor is {v:e} at coordinate row {r} outside its support"
                    )));
                }
            }
            if norm2(&col) <= SUPPORT_TOLERANCE {
                return Err(FactorError::Support(format!(
                    "{art} factor is numerically zero"
                )));
            }
        }
        Ok(())
    }
}

fn support_rows(map: &ArticulatorMap, art: ArticulatorId) -> Vec<bool> {
    let arts: &[ArticulatorId] = if art == ArticulatorId::Jaw {
        &UNION
    } else {
        std::slice::from_ref(&art)
    };
    let mut allowed = vec![false; 2 * map.p()];
    for r in map.coordinate_rows(arts) {
        allowed[r] = true;
    }
    allowed
}

/// Factor scores, t×5.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorScores {
    y: Mat,
}

impl FactorScores {
    pub fn new(y: Mat) -> Result<Self> {
        if y.cols() != ArticulatorId::ALL.len() {
            return Err(FactorError::Dimension(format!(
                "scores have {} columns, need 5",
                y.cols()
            )));
        }
        if !y.is_finite() {
            return Err(FactorError::Argument("non-finite factor scores".into()));
        }
        Ok(Self { y })
    }

    pub fn matrix(&self) -> &Mat {
        &self.y
    }

    pub fn into_matrix(self) -> Mat {
        self.y
    }

    pub fn t(&self) -> usize {
        self.y.rows()
    }
}

/// Subtracts each row's temporal mean. Returns the centered matrix and the means.
pub fn center(x: &Mat) -> Result<(Mat, Vec<f64>)> {
    let t = x.cols();
    if t < 2 {
        return Err(FactorError::Argument(format!(
            "centering needs t ≥ 2 frames, got {t}"
        )));
    }
    let mut out = x.clone();
    let mut means = Vec::with_capacity(x.rows());
    for r in 0..x.rows() {
        let row = out.row_mut(r);
        let mean = row.iter().sum::<f64>() / t as f64;
        row.iter_mut().for_each(|v| *v -= mean);
        means.push(mean);
    }
    Ok((out, means))
}

/// Leading eigenpair of `X_S·X_Sᵀ` where `X_S` keeps only `rows` of `x`.
/// The eigenvector is returned in full 2p coordinates.
fn leading_component(x: &Mat, rows: &[usize], art: ArticulatorId) -> Result<(Vec<f64>, f64)> {
    if rows.is_empty() {
        return Err(FactorError::Argument(format!(
            "articulator {art} owns no vertex"
        )));
    }
    let block = x.select(rows, &(0..x.cols()).collect::<Vec<_>>());
    let cov = block.matmul(&block.transpose())?;
    let eig = sym_eig(&cov)?;
    let lambda = eig.values[0];
    if !(lambda > DEGENERATE_EIGENVALUE) {
        return Err(FactorError::DegenerateMotion { art, lambda });
    }
    let mut q = vec![0.0; x.rows()];
    for (i, &r) in rows.iter().enumerate() {
        q[r] = eig.vectors[(i, 0)];
    }
    Ok((q, lambda))
}

/// `C_S·v·s` for the masked covariance `C_S = X_S X_Sᵀ`, evaluated as
/// `X_S·(X_Sᵀ·v)·s` so the 2p×2p matrix is never formed.
fn masked_cov_apply(x: &Mat, rows: &[usize], v: &[f64], s: f64) -> Vec<f64> {
    let t = x.cols();
    let mut proj = vec![0.0; t];
    for &r in rows {
        let w = v[r];
        if w != 0.0 {
            for (p, &xv) in proj.iter_mut().zip(x.row(r)) {
                *p += w * xv;
            }
        }
    }
    let mut out = vec![0.0; x.rows()];
    for &r in rows {
        out[r] = dot(x.row(r), &proj) * s;
    }
    out
}

fn check_coords(x: &Mat, map: &ArticulatorMap) -> Result<()> {
    if x.rows() != 2 * map.p() {
        return Err(FactorError::Dimension(format!(
            "{} coordinate rows for {} vertices",
            x.rows(),
            map.p()
        )));
    }
    Ok(())
}

pub fn extract_jaw_factor(x: &Mat, map: &ArticulatorMap) -> Result<Vec<f64>> {
    check_coords(x, map)?;
    let jaw_rows = map.coordinate_rows(&[ArticulatorId::Jaw]);
    for art in [ArticulatorId::Tongue, ArticulatorId::Lip] {
        if map.count(art) == 0 {
            return Err(FactorError::Argument(format!(
                "articulator {art} owns no vertex"
            )));
        }
    }
    let (q, lambda) = leading_component(x, &jaw_rows, ArticulatorId::Jaw)?;
    let union_rows = map.coordinate_rows(&UNION);
    Ok(masked_cov_apply(x, &union_rows, &q, lambda.powf(-0.5)))
}

/// `(I − f·f⁺)·X`.
pub fn remove_jaw(x: &Mat, f_jaw: &[f64]) -> Result<Mat> {
    if f_jaw.len() != x.rows() {
        return Err(FactorError::Dimension(format!(
            "jaw factor of length {} for {} rows",
            f_jaw.len(),
            x.rows()
        )));
    }
    let nn = dot(f_jaw, f_jaw);
    if !(nn > 0.0) {
        return Err(FactorError::Argument("jaw factor is zero".into()));
    }
    // f⁺ = fᵀ/‖f‖² for a single nonzero column.
    let coef: Vec<f64> = x.tr_mul_vec(f_jaw)?.into_iter().map(|c| c / nn).collect();
    let mut out = x.clone();
    for (r, &fr) in f_jaw.iter().enumerate() {
        if fr != 0.0 {
            for (o, &c) in out.row_mut(r).iter_mut().zip(&coef) {
                *o -= fr * c;
            }
        }
    }
    Ok(out)
}

pub fn extract_other_factor(
    x_other: &Mat,
    map: &ArticulatorMap,
    art: ArticulatorId,
) -> Result<Vec<f64>> {
    if art == ArticulatorId::Jaw {
        return Err(FactorError::Argument(
            "use extract_jaw_factor for the jaw".into(),
        ));
    }
    check_coords(x_other, map)?;
    let rows = map.coordinate_rows(&[art]);
    let (q, lambda) = leading_component(x_other, &rows, art)?;
    Ok(masked_cov_apply(x_other, &rows, &q, lambda.powf(-0.5)))
}

/// Runs both extraction passes on a centered sequence.
pub fn extract_factors(x: &Mat, map: &ArticulatorMap) -> Result<FactorSet> {
    let jaw = extract_jaw_factor(x, map)?;
    let x_other = remove_jaw(x, &jaw)?;
    let mut f = Mat::zeros(x.rows(), 5);
    f.set_col(0, &jaw);
    for art in &ArticulatorId::ALL[1..] {
        f.set_col(art.index(), &extract_other_factor(&x_other, map, *art)?);
    }
    FactorSet::new(f)
}

/// Least-squares scores `Y = (F⁺·X)ᵀ`.
pub fn compute_factor_scores(x: &Mat, f: &FactorSet) -> Result<FactorScores> {
    let fm = f.matrix();
    if fm.rows() != x.rows() {
        return Err(FactorError::Dimension(format!(
            "{} factor rows for {} coordinate rows",
            fm.rows(),
            x.rows()
        )));
    }
    let sigma = svd(fm)?.sigma;
    let largest = sigma[0];
    let smallest = *sigma.last().expect("five columns");
    if !(smallest > 1e-10 * largest) {
        return Err(FactorError::RankDeficient { smallest, largest });
    }
    let y = pinv(fm, None)?.matmul(x)?.transpose();
    FactorScores::new(y)
}

/// `F·Yᵀ`.
pub fn reconstruct(f: &FactorSet, y: &FactorScores) -> Result<Mat> {
    Ok(f.matrix().matmul(&y.matrix().transpose())?)
}

/// Everything [`analyze`] produces for one sequence.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub factors: FactorSet,
    pub scores: FactorScores,
    /// Per-coordinate temporal means removed before extraction.
    pub mean: Vec<f64>,
    /// `‖F·Yᵀ − X_c‖_F / ‖X_c‖_F` on the centered data.
    pub relative_error: f64,
}

/// Center, extract, verify support, and score.
pub fn analyze(seq: &ContourSequence) -> Result<Analysis> {
    let (xc, mean) = center(seq.x())?;
    let factors = extract_factors(&xc, seq.map())?;
    factors.check_support(seq.map())?;
    let scores = compute_factor_scores(&xc, &factors)?;
    let relative_error = relative_error(&xc, &factors, &scores)?;
    Ok(Analysis {
        factors,
        scores,
        mean,
        relative_error,
    })
}

pub fn relative_error(x: &Mat, f: &FactorSet, y: &FactorScores) -> Result<f64> {
    let denom = x.frobenius_norm();
    let num = reconstruct(f, y)?.sub(x)?.frobenius_norm();
    Ok(if denom > 0.0 { num / denom } else { num })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contour::{apply_projection, build_projection};
    use rand::{Rng, SeedableRng};
    use rand_pcg::Pcg64;
    use ArticulatorId::*;

    fn map() -> ArticulatorMap {
        ArticulatorMap::from_block_sizes([3, 4, 3, 2, 2]).unwrap()
    }

    fn cosine(a: &[f64], b: &[f64]) -> f64 {
        dot(a, b) / (norm2(a) * norm2(b))
    }

    fn rand_mat(r: usize, c: usize, rng: &mut Pcg64) -> Mat {
        Mat::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
    }

    /// Unit direction on `art`'s coordinates.
    fn direction(map: &ArticulatorMap, art: ArticulatorId, rng: &mut Pcg64) -> Vec<f64> {
        let mut v = vec![0.0; 2 * map.p()];
        for r in map.coordinate_rows(&[art]) {
            v[r] = rng.gen_range(-1.0..1.0);
        }
        let n = norm2(&v);
        v.iter().map(|x| x / n).collect()
    }

    /// Centered score series: zero-mean random walk per articulator.
    fn series(t: usize, rng: &mut Pcg64) -> Vec<f64> {
        let v: Vec<f64> = (0..t).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let m = v.iter().sum::<f64>() / t as f64;
        v.into_iter().map(|x| x - m).collect()
    }

    fn outer(u: &[f64], s: &[f64]) -> Mat {
        Mat::from_fn(u.len(), s.len(), |r, c| u[r] * s[c])
    }

    #[test]
    fn center_properties() {
        let x = Mat::from_fn(4, 5, |_, _| 2.5);
        let (c, mean) = center(&x).unwrap();
        assert_eq!(c, Mat::zeros(4, 5));
        assert_eq!(mean, vec![2.5; 4]);

        let mut rng = Pcg64::seed_from_u64(1);
        let x = rand_mat(6, 9, &mut rng);
        let (c, mean) = center(&x).unwrap();
        for r in 0..6 {
            assert!(c.row(r).iter().sum::<f64>().abs() / 9.0 <= 1e-12);
            for k in 0..9 {
                assert!((c[(r, k)] + mean[r] - x[(r, k)]).abs() <= 1e-15);
            }
        }
        assert!(center(&Mat::zeros(4, 1)).is_err());
    }

    #[test]
    fn jaw_only_motion_recovers_direction() {
        let map = map();
        let mut rng = Pcg64::seed_from_u64(2);
        let u = direction(&map, Jaw, &mut rng);
        let x = outer(&u, &series(50, &mut rng));
        let f = extract_jaw_factor(&x, &map).unwrap();
        assert!(cosine(&f, &u).abs() >= 0.999);
    }

    #[test]
    fn correlated_tongue_motion_enters_jaw_factor() {
        let map = map();
        let mut rng = Pcg64::seed_from_u64(3);
        let u = direction(&map, Jaw, &mut rng);
        let w = direction(&map, Tongue, &mut rng);
        let s = series(60, &mut rng);
        let x = outer(&u, &s).add(&outer(&w, &s).scale(0.7)).unwrap();
        let f = extract_jaw_factor(&x, &map).unwrap();
        let tongue_energy: f64 = map
            .coordinate_rows(&[Tongue])
            .iter()
            .map(|&r| f[r] * f[r])
            .sum();
        assert!(tongue_energy > 1e-3);
        for r in map.coordinate_rows(&[Velum, Larynx]) {
            assert_eq!(f[r], 0.0);
        }
    }

    #[test]
    fn motionless_jaw_is_degenerate() {
        let map = map();
        let mut rng = Pcg64::seed_from_u64(4);
        let w = direction(&map, Tongue, &mut rng);
        let x = outer(&w, &series(30, &mut rng));
        assert!(matches!(
            extract_jaw_factor(&x, &map),
            Err(FactorError::DegenerateMotion { art: Jaw, .. })
        ));
    }

    #[test]
    fn remove_jaw_projector() {
        let mut rng = Pcg64::seed_from_u64(5);
        let f: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let c: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        // Full span removed.
        let out = remove_jaw(&outer(&f, &c), &f).unwrap();
        assert!(out.max_abs() <= 1e-12);
        // Orthogonal data untouched.
        let x = rand_mat(8, 6, &mut rng);
        let ortho = remove_jaw(&x, &f).unwrap();
        assert!(
            remove_jaw(&ortho, &f)
                .unwrap()
                .sub(&ortho)
                .unwrap()
                .max_abs()
                <= 1e-10
        );
        // f⁺ X_other = 0.
        let coef = ortho.tr_mul_vec(&f).unwrap();
        assert!(coef.iter().all(|v| v.abs() <= 1e-8));
        assert!(matches!(
            remove_jaw(&x, &[0.0; 8]),
            Err(FactorError::Argument(_))
        ));
    }

    #[test]
    fn jaw_recovery_splits_data() {
        let mut rng = Pcg64::seed_from_u64(6);
        let x = rand_mat(8, 12, &mut rng);
        let f: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let fm = Mat::column(&f);
        let recovered = fm
            .matmul(&pinv(&fm, None).unwrap())
            .unwrap()
            .matmul(&x)
            .unwrap();
        let sum = recovered.add(&remove_jaw(&x, &f).unwrap()).unwrap();
        assert!(sum.sub(&x).unwrap().max_abs() <= 1e-10);
    }

    #[test]
    fn other_factor_is_scaled_principal_component() {
        let map = map();
        let mut rng = Pcg64::seed_from_u64(7);
        let v = direction(&map, Velum, &mut rng);
        let u = direction(&map, Jaw, &mut rng);
        let x = outer(&v, &series(40, &mut rng))
            .add(&outer(&u, &series(40, &mut rng)))
            .unwrap();
        let f = extract_other_factor(&x, &map, Velum).unwrap();
        assert!(cosine(&f, &v).abs() >= 0.999);

        let masked = apply_projection(&build_projection(&map, &[Velum]).unwrap(), &x).unwrap();
        let lambda = sym_eig(&masked.matmul(&masked.transpose()).unwrap())
            .unwrap()
            .values[0];
        assert!((norm2(&f) - lambda.sqrt()).abs() <= 1e-8);
        let allowed = map.coordinate_rows(&[Velum]);
        for (r, val) in f.iter().enumerate() {
            if !allowed.contains(&r) {
                assert_eq!(*val, 0.0);
            }
        }
        assert!(extract_other_factor(&x, &map, Jaw).is_err());
    }

    fn random_factor_set(map: &ArticulatorMap, rng: &mut Pcg64) -> FactorSet {
        let mut f = Mat::zeros(2 * map.p(), 5);
        for art in ArticulatorId::ALL {
            f.set_col(art.index(), &direction(map, art, rng));
        }
        FactorSet::new(f).unwrap()
    }

    #[test]
    fn scores_recover_exact_span() {
        let map = map();
        let mut rng = Pcg64::seed_from_u64(8);
        let f = random_factor_set(&map, &mut rng);
        let y = rand_mat(20, 5, &mut rng);
        let x = f.matrix().matmul(&y.transpose()).unwrap();
        let got = compute_factor_scores(&x, &f).unwrap();
        assert!(got.matrix().sub(&y).unwrap().max_abs() <= 1e-8);
    }

    #[test]
    fn scores_of_orthogonal_data_vanish() {
        let map = map();
        let mut rng = Pcg64::seed_from_u64(9);
        let f = random_factor_set(&map, &mut rng);
        let x = rand_mat(2 * map.p(), 10, &mut rng);
        // Project x onto the orthogonal complement of span(F).
        let fm = f.matrix();
        let proj = fm.matmul(&pinv(fm, None).unwrap()).unwrap();
        let x_perp = x.sub(&proj.matmul(&x).unwrap()).unwrap();
        let y = compute_factor_scores(&x_perp, &f).unwrap();
        assert!(y.matrix().max_abs() <= 1e-12);
    }

    #[test]
    fn residual_is_orthogonal_to_factors() {
        let map = map();
        let mut rng = Pcg64::seed_from_u64(10);
        let f = random_factor_set(&map, &mut rng);
        let x = rand_mat(2 * map.p(), 15, &mut rng);
        let y = compute_factor_scores(&x, &f).unwrap();
        let resid = reconstruct(&f, &y).unwrap().sub(&x).unwrap();
        let normal = f.matrix().transpose().matmul(&resid).unwrap();
        assert!(normal.max_abs() <= 1e-8 * x.frobenius_norm());
    }

    #[test]
    fn rank_deficient_factors_rejected() {
        let map = map();
        let mut rng = Pcg64::seed_from_u64(11);
        let mut f = random_factor_set(&map, &mut rng).matrix().clone();
        let c0 = f.col(1);
        f.set_col(0, &c0);
        let f = FactorSet::new(f).unwrap();
        let x = rand_mat(2 * map.p(), 6, &mut rng);
        assert!(matches!(
            compute_factor_scores(&x, &f),
            Err(FactorError::RankDeficient { .. })
        ));
    }

    #[test]
    fn reconstruct_basics() {
        let map = map();
        let mut rng = Pcg64::seed_from_u64(12);
        let f = random_factor_set(&map, &mut rng);
        let zero = FactorScores::new(Mat::zeros(4, 5)).unwrap();
        assert_eq!(reconstruct(&f, &zero).unwrap(), Mat::zeros(2 * map.p(), 4));
        let mut y = Mat::zeros(4, 5);
        y[(2, 3)] = 1.0;
        let x = reconstruct(&f, &FactorScores::new(y).unwrap()).unwrap();
        assert_eq!(x.col(2), f.column(Velum));
        assert_eq!(x.col(0), vec![0.0; 2 * map.p()]);
    }

    #[test]
    fn support_check_catches_leaks() {
        let map = map();
        let mut rng = Pcg64::seed_from_u64(13);
        let f = random_factor_set(&map, &mut rng);
        f.check_support(&map).unwrap();
        let mut bad = f.matrix().clone();
        let velum_row = map.coordinate_rows(&[Velum])[0];
        bad[(velum_row, Tongue.index())] = 1e-3;
        assert!(matches!(
            FactorSet::new(bad).unwrap().check_support(&map),
            Err(FactorError::Support(_))
        ));
    }
}
