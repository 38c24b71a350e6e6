//! Cost evaluation with tangent-frame first derivatives, mixed second
//! derivatives, twist diagnostics and seeded perturbation.

use crate::error::{Error, Result};
use crate::geometry::vecmath::*;
use crate::geometry::EmbeddedSample;
use crate::ratio::{format_ratio, parse_ratio, rational_from_f64, rational_to_f64};
use num_rational::BigRational;
use num_traits::Zero;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::Error as DeError;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Dense cost matrix over index pairs, exact rational entries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<BigRational>,
}

impl CostMatrix {
    pub fn from_rationals(rows: Vec<Vec<BigRational>>) -> Result<Self> {
        let r = rows.len();
        if r == 0 {
            return Err(Error::InvalidInstance("empty cost matrix".into()));
        }
        let c = rows[0].len();
        if c == 0 || rows.iter().any(|row| row.len() != c) {
            return Err(Error::InvalidInstance("ragged cost matrix".into()));
        }
        Ok(Self {
            rows: r,
            cols: c,
            entries: rows.into_iter().flatten().collect(),
        })
    }

    /// Exact lift of a double matrix; every finite double is a rational.
    pub fn from_f64(rows: &[Vec<f64>]) -> Result<Self> {
        let lifted = rows
            .iter()
            .map(|row| row.iter().map(|&x| rational_from_f64(x)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        Self::from_rationals(lifted)
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> Result<&BigRational> {
        if i >= self.rows || j >= self.cols {
            return Err(Error::IndexOutOfRange {
                i,
                j,
                rows: self.rows,
                cols: self.cols,
            });
        }
        Ok(&self.entries[i * self.cols + j])
    }

    pub fn entries(&self) -> &[BigRational] {
        &self.entries
    }

    pub fn to_f64(&self) -> Vec<Vec<f64>> {
        (0..self.rows)
            .map(|i| {
                (0..self.cols)
                    .map(|j| rational_to_f64(&self.entries[i * self.cols + j]))
                    .collect()
            })
            .collect()
    }

    /// Sup-norm distance, exact.
    pub fn sup_distance(&self, other: &CostMatrix) -> BigRational {
        let mut best = BigRational::zero();
        for (a, b) in self.entries.iter().zip(&other.entries) {
            let d = if a >= b { a - b } else { b - a };
            if d > best {
                best = d;
            }
        }
        best
    }

    pub fn add_constant(&self, k: &BigRational) -> CostMatrix {
        CostMatrix {
            rows: self.rows,
            cols: self.cols,
            entries: self.entries.iter().map(|e| e + k).collect(),
        }
    }
}

// Stored as a dense JSON matrix (row = source index); entries that are
// exactly doubles serialize as numbers, anything else as "p/q" strings.
impl Serialize for CostMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeSeq;
        #[derive(Serialize)]
        #[serde(untagged)]
        enum Cell {
            Num(f64),
            Str(String),
        }
        let mut seq = s.serialize_seq(Some(self.rows))?;
        for i in 0..self.rows {
            let row: Vec<Cell> = (0..self.cols)
                .map(|j| {
                    let r = &self.entries[i * self.cols + j];
                    let x = rational_to_f64(r);
                    match rational_from_f64(x) {
                        Ok(ref lifted) if lifted == r => Cell::Num(x),
                        _ => Cell::Str(format_ratio(r)),
                    }
                })
                .collect();
            seq.serialize_element(&row)?;
        }
        seq.end()
    }
}

impl<'de> Deserialize<'de> for CostMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Cell {
            Num(f64),
            Str(String),
        }
        let raw: Vec<Vec<Cell>> = Vec::deserialize(d)?;
        let rows = raw
            .into_iter()
            .map(|row| {
                row.into_iter()
                    .map(|c| match c {
                        Cell::Num(x) => rational_from_f64(x).map_err(D::Error::custom),
                        Cell::Str(s) => parse_ratio(&s).map_err(D::Error::custom),
                    })
                    .collect::<std::result::Result<Vec<_>, _>>()
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;
        CostMatrix::from_rationals(rows).map_err(D::Error::custom)
    }
}

/// The cost families of the toolkit.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CostField {
    /// Half squared Euclidean distance on ambient coordinates.
    QuadraticAmbient,
    /// Same evaluation on bouquet-embedded samples; tagged separately
    /// because the samples come from the simplex embedding.
    BouquetComposed,
    /// Dense matrix over index pairs; carries no tangent structure.
    MatrixTabulated { matrix: CostMatrix },
    /// Tabulated matrix obtained by seeded uniform perturbation.
    Perturbed {
        matrix: CostMatrix,
        eps: f64,
        seed: u64,
    },
}

impl CostField {
    pub fn is_geometric(&self) -> bool {
        matches!(self, CostField::QuadraticAmbient | CostField::BouquetComposed)
    }

    pub fn tabulated(&self) -> Option<&CostMatrix> {
        match self {
            CostField::MatrixTabulated { matrix } | CostField::Perturbed { matrix, .. } => {
                Some(matrix)
            }
            _ => None,
        }
    }
}

/// Tangent covectors of the cost at a support pair.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientPair {
    pub gx: Vec<f64>,
    pub gy: Vec<f64>,
}

/// A cost field together with the samples it is evaluated on.
pub struct CostEnv<'a> {
    pub field: &'a CostField,
    pub source: &'a EmbeddedSample,
    pub target: &'a EmbeddedSample,
}

impl<'a> CostEnv<'a> {
    pub fn new(
        field: &'a CostField,
        source: &'a EmbeddedSample,
        target: &'a EmbeddedSample,
    ) -> Self {
        Self {
            field,
            source,
            target,
        }
    }

    pub fn nrows(&self) -> usize {
        match self.field.tabulated() {
            Some(m) => m.nrows(),
            None => self.source.len(),
        }
    }

    pub fn ncols(&self) -> usize {
        match self.field.tabulated() {
            Some(m) => m.ncols(),
            None => self.target.len(),
        }
    }

    pub fn eval(&self, i: usize, j: usize) -> Result<f64> {
        match self.field {
            CostField::QuadraticAmbient | CostField::BouquetComposed => {
                Ok(quadratic_cost(&self.source.points[i], &self.target.points[j]))
            }
            CostField::MatrixTabulated { matrix } | CostField::Perturbed { matrix, .. } => {
                Ok(rational_to_f64(matrix.get(i, j)?))
            }
        }
    }

    /// Dense exact matrix for the solver; geometric kinds lift their double
    /// evaluations exactly.
    pub fn matrix(&self) -> Result<CostMatrix> {
        if let Some(m) = self.field.tabulated() {
            return Ok(m.clone());
        }
        let rows: Vec<Vec<f64>> = (0..self.source.len())
            .map(|i| {
                (0..self.target.len())
                    .map(|j| quadratic_cost(&self.source.points[i], &self.target.points[j]))
                    .collect()
            })
            .collect();
        CostMatrix::from_f64(&rows)
    }

    /// Tangent gradient in x, coordinates in the stored frame at source i.
    pub fn grad_x(&self, i: usize, j: usize) -> Result<Vec<f64>> {
        if !self.field.is_geometric() {
            return Err(Error::MissingFrame(
                "tabulated costs carry no tangent frames".into(),
            ));
        }
        Ok(quadratic_grad(
            &self.source.points[i],
            &self.target.points[j],
            &self.source.tangents[i],
        ))
    }

    /// Tangent gradient in y at target j.
    pub fn grad_y(&self, i: usize, j: usize) -> Result<Vec<f64>> {
        if !self.field.is_geometric() {
            return Err(Error::MissingFrame(
                "tabulated costs carry no tangent frames".into(),
            ));
        }
        Ok(quadratic_grad(
            &self.target.points[j],
            &self.source.points[i],
            &self.target.tangents[j],
        ))
    }

    /// Gradient data driving the chain link tests.
    ///
    /// Tabulated costs have no frames; their pairs carry empty covectors, so
    /// gradient equality is vacuous and linking degenerates to the
    /// shared-coordinate rule used by the tabulated examples.
    pub fn link_gradients(&self, i: usize, j: usize) -> Result<GradientPair> {
        if self.field.is_geometric() {
            Ok(GradientPair {
                gx: self.grad_x(i, j)?,
                gy: self.grad_y(i, j)?,
            })
        } else {
            Ok(GradientPair {
                gx: Vec::new(),
                gy: Vec::new(),
            })
        }
    }

    /// Mixed second derivative in tangent frames, by central differences of
    /// the analytic x-gradient along the target frame directions.
    pub fn mixed_hessian(&self, i: usize, j: usize, fd_step: f64) -> Result<Vec<Vec<f64>>> {
        if !self.field.is_geometric() {
            return Err(Error::MissingFrame(
                "tabulated costs carry no tangent frames".into(),
            ));
        }
        let x = &self.source.points[i];
        let fx = &self.source.tangents[i];
        let y = &self.target.points[j];
        let fy = &self.target.tangents[j];
        let rows = fx.len();
        let cols = fy.len();
        let mut h = vec![vec![0.0; cols]; rows];
        for (b, tb) in fy.iter().enumerate() {
            let yp = axpy(y, fd_step, tb);
            let ym = axpy(y, -fd_step, tb);
            let gp = quadratic_grad(x, &yp, fx);
            let gm = quadratic_grad(x, &ym, fx);
            for a in 0..rows {
                h[a][b] = (gp[a] - gm[a]) / (2.0 * fd_step);
            }
        }
        Ok(h)
    }
}

pub fn quadratic_cost(x: &[f64], y: &[f64]) -> f64 {
    let d = sub(x, y);
    0.5 * dot(&d, &d)
}

/// Projection of (x - y) onto the frame at x: the tangential derivative of
/// the half squared distance.
fn quadratic_grad(x: &[f64], y: &[f64], frame: &[Vec<f64>]) -> Vec<f64> {
    let d = sub(x, y);
    frame.iter().map(|t| dot(t, &d)).collect()
}

/// Smallest singular value of a small matrix (frames have 1 or 2 tangents).
pub fn smallest_singular_value(h: &[Vec<f64>]) -> f64 {
    let rows = h.len();
    let cols = h.first().map_or(0, Vec::len);
    match (rows, cols) {
        (1, 1) => h[0][0].abs(),
        (2, 2) => {
            let t = h[0][0] * h[0][0] + h[0][1] * h[0][1] + h[1][0] * h[1][0] + h[1][1] * h[1][1];
            let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
            let disc = (t * t - 4.0 * det * det).max(0.0).sqrt();
            (0.5 * (t - disc)).max(0.0).sqrt()
        }
        _ => {
            // Rectangular frames do not arise for the supported dimensions.
            f64::NAN
        }
    }
}

/// Pairs where the mixed Hessian is numerically singular.
#[derive(Debug, Clone)]
pub struct TwistScan {
    pub flagged: Vec<(usize, usize)>,
    pub fraction: f64,
}

/// Scans the full sample grid for twist failures: smallest singular value of
/// the mixed Hessian below `sv_tol`.
pub fn twist_scan(env: &CostEnv, sv_tol: f64, fd_step: f64) -> Result<TwistScan> {
    if env.source.is_empty() || env.target.is_empty() {
        return Err(Error::InvalidInstance("empty sample in twist scan".into()));
    }
    let mut flagged = Vec::new();
    let total = env.source.len() * env.target.len();
    for i in 0..env.source.len() {
        for j in 0..env.target.len() {
            let sv = match env.field {
                CostField::QuadraticAmbient | CostField::BouquetComposed => {
                    smallest_singular_value(&env.mixed_hessian(i, j, fd_step)?)
                }
                // Tabulated costs have identically zero mixed Hessians on
                // their discrete index space.
                _ => 0.0,
            };
            if sv < sv_tol {
                flagged.push((i, j));
            }
        }
    }
    let fraction = flagged.len() as f64 / total as f64;
    Ok(TwistScan { flagged, fraction })
}

/// Seeded dense uniform perturbation: c + eps * U[0,1), exact entries.
pub fn perturb(matrix: &CostMatrix, eps: f64, seed: u64) -> Result<CostField> {
    if eps < 0.0 {
        return Err(Error::InvalidParameter("perturbation eps must be >= 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(matrix.nrows());
    for i in 0..matrix.nrows() {
        let mut row = Vec::with_capacity(matrix.ncols());
        for j in 0..matrix.ncols() {
            let u = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
            let bump = rational_from_f64(eps * u)?;
            row.push(matrix.get(i, j)?.clone() + bump);
        }
        rows.push(row);
    }
    Ok(CostField::Perturbed {
        matrix: CostMatrix::from_rationals(rows)?,
        eps,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{sample_circle, sample_sphere};
    use rand::Rng;

    fn quad_env<'a>(
        field: &'a CostField,
        s: &'a EmbeddedSample,
        t: &'a EmbeddedSample,
    ) -> CostEnv<'a> {
        CostEnv::new(field, s, t)
    }

    #[test]
    fn eval_basics() {
        let s = sample_circle(4, 1.0, [0.0, 0.0]).unwrap();
        let field = CostField::QuadraticAmbient;
        let env = quad_env(&field, &s, &s);
        assert_eq!(env.eval(0, 0).unwrap(), 0.0);
        // x=(1,0), y=(-1,0): half of 4.
        assert!((env.eval(0, 2).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn tabulated_index_error() {
        let m = CostMatrix::from_f64(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert!(m.get(2, 0).is_err());
        assert!(m.get(0, 2).is_err());
    }

    #[test]
    fn grad_zero_at_coincidence_and_antipode() {
        let s = sample_circle(360, 1.0, [0.0, 0.0]).unwrap();
        let field = CostField::QuadraticAmbient;
        let env = quad_env(&field, &s, &s);
        let g = env.grad_x(7, 7).unwrap();
        assert!(g[0].abs() < 1e-15);
        // Antipodal pair: x - y is normal at x, so the tangential gradient
        // vanishes; antipodal pairs are critical.
        let g = env.grad_x(0, 180).unwrap();
        assert!(g[0].abs() < 1e-12);
    }

    #[test]
    fn grad_matches_central_differences() {
        let s = sample_circle(97, 1.3, [0.2, -0.1]).unwrap();
        let field = CostField::QuadraticAmbient;
        let env = quad_env(&field, &s, &s);
        let h = 1e-5;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let i = rng.gen_range(0..s.len());
            let j = rng.gen_range(0..s.len());
            let g = env.grad_x(i, j).unwrap();
            let t = &s.tangents[i][0];
            let xp = axpy(&s.points[i], h, t);
            let xm = axpy(&s.points[i], -h, t);
            let fd = (quadratic_cost(&xp, &s.points[j]) - quadratic_cost(&xm, &s.points[j]))
                / (2.0 * h);
            assert!((g[0] - fd).abs() <= 1e-6, "{} vs {}", g[0], fd);
        }
    }

    #[test]
    fn grad_frame_rotation_consistency() {
        // Rotating the stored 2-frame on a sphere rotates the covector the
        // same way.
        let s = sample_sphere(50, 1.0, [0.0, 0.0, 0.0]).unwrap();
        let mut rotated = s.clone();
        let (c, sn) = (0.6_f64, 0.8_f64);
        for f in rotated.tangents.iter_mut() {
            let t1 = f[0].clone();
            let t2 = f[1].clone();
            f[0] = t1.iter().zip(&t2).map(|(a, b)| c * a + sn * b).collect();
            f[1] = t1.iter().zip(&t2).map(|(a, b)| -sn * a + c * b).collect();
        }
        rotated.validate().unwrap();
        let field = CostField::QuadraticAmbient;
        let e1 = CostEnv::new(&field, &s, &s);
        let e2 = CostEnv::new(&field, &rotated, &rotated);
        let g1 = e1.grad_x(3, 17).unwrap();
        let g2 = e2.grad_x(3, 17).unwrap();
        let expect0 = c * g1[0] + sn * g1[1];
        let expect1 = -sn * g1[0] + c * g1[1];
        assert!((g2[0] - expect0).abs() < 1e-12);
        assert!((g2[1] - expect1).abs() < 1e-12);
    }

    #[test]
    fn mixed_hessian_circle_closed_form() {
        let s = sample_circle(36, 1.0, [0.0, 0.0]).unwrap();
        let field = CostField::QuadraticAmbient;
        let env = quad_env(&field, &s, &s);
        for i in [0usize, 5, 9, 20] {
            for j in [0usize, 9, 18, 27] {
                let h = env.mixed_hessian(i, j, 1e-5).unwrap();
                let expect = -dot(&s.tangents[i][0], &s.tangents[j][0]);
                assert!((h[0][0] - expect).abs() <= 1e-6, "{} vs {expect}", h[0][0]);
            }
        }
        // Orthogonal tangents at quarter turn: singular.
        let h = env.mixed_hessian(0, 9, 1e-5).unwrap();
        assert!(smallest_singular_value(&h) < 1e-8);
        // Antipodal: parallel tangents, entry -+1.
        let h = env.mixed_hessian(0, 18, 1e-5).unwrap();
        assert!((h[0][0].abs() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn twist_scan_flags_orthogonal_pairs_only() {
        let s = sample_circle(60, 1.0, [0.0, 0.0]).unwrap();
        let field = CostField::QuadraticAmbient;
        let env = quad_env(&field, &s, &s);
        let scan = twist_scan(&env, 1e-8, 1e-5).unwrap();
        for (i, j) in &scan.flagged {
            let diff = (*i as isize - *j as isize).rem_euclid(60);
            assert!(diff == 15 || diff == 45, "unexpected flag at ({i},{j})");
        }
        // Exactly the quarter-turn pairs.
        assert_eq!(scan.flagged.len(), 2 * 60);
        assert!((scan.fraction - 2.0 / 60.0).abs() < 1e-12);
    }

    #[test]
    fn twist_scan_constant_cost_flags_everything() {
        let s = sample_circle(6, 1.0, [0.0, 0.0]).unwrap();
        let m = CostMatrix::from_f64(&vec![vec![1.0; 6]; 6]).unwrap();
        let field = CostField::MatrixTabulated { matrix: m };
        let env = CostEnv::new(&field, &s, &s);
        let scan = twist_scan(&env, 1e-8, 1e-5).unwrap();
        assert_eq!(scan.flagged.len(), 36);
        assert_eq!(scan.fraction, 1.0);
    }

    #[test]
    fn perturb_contract() {
        let base = CostMatrix::from_f64(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let p0 = perturb(&base, 0.0, 42).unwrap();
        assert_eq!(p0.tabulated().unwrap(), &base);

        let p1 = perturb(&base, 1e-6, 42).unwrap();
        let p1b = perturb(&base, 1e-6, 42).unwrap();
        assert_eq!(p1.tabulated().unwrap(), p1b.tabulated().unwrap());
        let d = p1.tabulated().unwrap().sup_distance(&base);
        assert!(rational_to_f64(&d) <= 1e-6);

        // Monotone in eps.
        let p2 = perturb(&base, 1e-3, 42).unwrap();
        let d2 = p2.tabulated().unwrap().sup_distance(&base);
        assert!(d2 >= d);
        assert!(rational_to_f64(&d2) <= 1e-3);
    }

    #[test]
    fn matrix_json_round_trip_exact() {
        let m = CostMatrix::from_rationals(vec![
            vec![parse_ratio("1/3").unwrap(), parse_ratio("0.25").unwrap()],
            vec![parse_ratio("2").unwrap(), parse_ratio("7/11").unwrap()],
        ])
        .unwrap();
        let s = serde_json::to_string(&m).unwrap();
        let back: CostMatrix = serde_json::from_str(&s).unwrap();
        assert_eq!(m, back);
    }
}
