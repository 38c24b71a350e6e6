//! Embedded point samples and the geometric maps behind the cost families:
//! circles and spheres, nested tangent boundaries, the lake scene, and the
//! simplex-to-sphere embedding feeding the bouquet cost.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;

pub mod vecmath {
    pub fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
        a.iter().zip(b).map(|(x, y)| x - y).collect()
    }

    pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
        a.iter().zip(b).map(|(x, y)| x + y).collect()
    }

    pub fn scale(a: &[f64], s: f64) -> Vec<f64> {
        a.iter().map(|x| x * s).collect()
    }

    pub fn axpy(y: &[f64], a: f64, x: &[f64]) -> Vec<f64> {
        y.iter().zip(x).map(|(yi, xi)| yi + a * xi).collect()
    }

    pub fn norm(a: &[f64]) -> f64 {
        dot(a, a).sqrt()
    }

    pub fn dist(a: &[f64], b: &[f64]) -> f64 {
        norm(&sub(a, b))
    }

    pub fn normalize(a: &[f64]) -> Vec<f64> {
        let n = norm(a);
        scale(a, 1.0 / n)
    }

    pub fn cross3(a: &[f64], b: &[f64]) -> Vec<f64> {
        vec![
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        ]
    }
}

use vecmath::*;

/// Unit-tolerance for frame and on-sphere invariants.
pub const FRAME_TOL: f64 = 1e-12;
/// Absolute tolerance for merging shared tangency points.
pub const DEDUP_TOL: f64 = 1e-9;

/// Sphere (or circle) descriptor in ambient coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SphereDesc {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl SphereDesc {
    pub fn normal_at(&self, p: &[f64]) -> Vec<f64> {
        scale(&sub(p, &self.center), 1.0 / self.radius)
    }

    pub fn contains_strictly(&self, p: &[f64]) -> bool {
        dist(p, &self.center) < self.radius
    }

    pub fn signed_gap(&self, p: &[f64]) -> f64 {
        dist(p, &self.center) - self.radius
    }
}

/// Disc obstacle of the lake scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscDesc {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl DiscDesc {
    /// Distance from `x` to the closed disc; errors inside the disc, where
    /// the gradient formula used by the lake potentials is invalid.
    pub fn distance(&self, x: &[f64]) -> Result<f64> {
        let d = dist(x, &self.center) - self.radius;
        if d < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "point {x:?} lies inside the obstacle disc"
            )));
        }
        Ok(d)
    }

    /// Gradient of the distance function, unit norm for exterior points.
    pub fn distance_gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.distance(x)?;
        Ok(normalize(&sub(x, &self.center)))
    }
}

/// A finite embedded sample of one or more hypersurfaces.
///
/// Per point: ambient coordinates, unit outward normal, an orthonormal
/// tangent basis (d-1 vectors), and a body tag. Body tag 0 is reserved for
/// shared tangency points (deduplicated across bodies); tags 1.. index into
/// `bodies`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbeddedSample {
    pub points: Vec<Vec<f64>>,
    pub normals: Vec<Vec<f64>>,
    pub tangents: Vec<Vec<Vec<f64>>>,
    pub body_index: Vec<usize>,
    pub bodies: Vec<SphereDesc>,
}

impl EmbeddedSample {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.first().map_or(0, Vec::len)
    }

    pub fn body_of(&self, i: usize) -> Option<&SphereDesc> {
        match self.body_index[i] {
            0 => None,
            k => self.bodies.get(k - 1),
        }
    }

    /// Checks the frame invariants: unit normals, orthonormal tangents
    /// orthogonal to the normal, and on-sphere distances for tagged bodies.
    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        if self.normals.len() != n || self.tangents.len() != n || self.body_index.len() != n {
            return Err(Error::InvalidInstance("ragged sample arrays".into()));
        }
        for i in 0..n {
            let nu = &self.normals[i];
            if (norm(nu) - 1.0).abs() > FRAME_TOL {
                return Err(Error::InvalidInstance(format!(
                    "normal {i} has norm {}",
                    norm(nu)
                )));
            }
            for (a, ta) in self.tangents[i].iter().enumerate() {
                if (norm(ta) - 1.0).abs() > FRAME_TOL || dot(ta, nu).abs() > FRAME_TOL {
                    return Err(Error::InvalidInstance(format!(
                        "tangent {a} at point {i} not unit or not orthogonal to normal"
                    )));
                }
                for tb in &self.tangents[i][..a] {
                    if dot(ta, tb).abs() > FRAME_TOL {
                        return Err(Error::InvalidInstance(format!(
                            "tangent basis at point {i} not orthonormal"
                        )));
                    }
                }
            }
            if let Some(body) = self.body_of(i) {
                if body.signed_gap(&self.points[i]).abs() > FRAME_TOL {
                    return Err(Error::InvalidInstance(format!(
                        "point {i} off its sphere by {}",
                        body.signed_gap(&self.points[i])
                    )));
                }
            }
        }
        Ok(())
    }
}

/// JSON emission per the instance interface: points, normals, body tags.
/// Ordering is the construction ordering, lexicographic in (body, index).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleJson {
    pub points: Vec<Vec<f64>>,
    pub normals: Vec<Vec<f64>>,
    pub body_index: Vec<usize>,
}

impl From<&EmbeddedSample> for SampleJson {
    fn from(s: &EmbeddedSample) -> Self {
        SampleJson {
            points: s.points.clone(),
            normals: s.normals.clone(),
            body_index: s.body_index.clone(),
        }
    }
}

fn circle_frame(normal: &[f64]) -> Vec<Vec<f64>> {
    vec![vec![-normal[1], normal[0]]]
}

fn sphere_frame(normal: &[f64]) -> Vec<Vec<f64>> {
    let reference = if normal[2].abs() < 0.9 {
        vec![0.0, 0.0, 1.0]
    } else {
        vec![1.0, 0.0, 0.0]
    };
    let t1 = normalize(&axpy(&reference, -dot(&reference, normal), normal));
    let t2 = cross3(normal, &t1);
    vec![t1, t2]
}

/// Frame for a point with the given unit normal, d in {2, 3}.
pub fn tangent_frame(normal: &[f64]) -> Result<Vec<Vec<f64>>> {
    match normal.len() {
        2 => Ok(circle_frame(normal)),
        3 => Ok(sphere_frame(normal)),
        d => Err(Error::InvalidParameter(format!(
            "no tangent frame construction for ambient dimension {d}"
        ))),
    }
}

/// `n` equally spaced points on the circle of given radius and center.
pub fn sample_circle(n: usize, radius: f64, center: [f64; 2]) -> Result<EmbeddedSample> {
    if n < 3 {
        return Err(Error::InvalidInstance(format!(
            "circle sample needs n >= 3, got {n}"
        )));
    }
    if !(radius > 0.0) {
        return Err(Error::InvalidInstance(format!("radius must be positive, got {radius}")));
    }
    let body = SphereDesc {
        center: center.to_vec(),
        radius,
    };
    let mut points = Vec::with_capacity(n);
    let mut normals = Vec::with_capacity(n);
    let mut tangents = Vec::with_capacity(n);
    for k in 0..n {
        let theta = 2.0 * std::f64::consts::PI * (k as f64) / (n as f64);
        let nu = vec![theta.cos(), theta.sin()];
        points.push(axpy(&body.center, radius, &nu));
        tangents.push(circle_frame(&nu));
        normals.push(nu);
    }
    let sample = EmbeddedSample {
        points,
        normals,
        tangents,
        body_index: vec![1; n],
        bodies: vec![body],
    };
    sample.validate()?;
    Ok(sample)
}

/// `n` points on a 2-sphere: a Fibonacci lattice, plus nothing special.
pub fn sample_sphere(n: usize, radius: f64, center: [f64; 3]) -> Result<EmbeddedSample> {
    if n < 3 {
        return Err(Error::InvalidInstance(format!(
            "sphere sample needs n >= 3, got {n}"
        )));
    }
    let body = SphereDesc {
        center: center.to_vec(),
        radius,
    };
    let golden = std::f64::consts::PI * (3.0 - 5.0_f64.sqrt());
    let mut points = Vec::with_capacity(n);
    let mut normals = Vec::with_capacity(n);
    let mut tangents = Vec::with_capacity(n);
    for k in 0..n {
        let z = 1.0 - 2.0 * (k as f64 + 0.5) / (n as f64);
        let r = (1.0 - z * z).sqrt();
        let phi = golden * k as f64;
        let nu = normalize(&[r * phi.cos(), r * phi.sin(), z]);
        points.push(axpy(&body.center, radius, &nu));
        tangents.push(sphere_frame(&nu));
        normals.push(nu);
    }
    let sample = EmbeddedSample {
        points,
        normals,
        tangents,
        body_index: vec![1; n],
        bodies: vec![body],
    };
    sample.validate()?;
    Ok(sample)
}

/// The conjugate target along the outward normal ray: `y + lambda n(x)` with
/// `lambda >= 0` maximal keeping the point on x's sphere, `y` itself when the
/// open ray misses the sphere.
pub fn normal_conjugate(sphere: &SphereDesc, x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = sphere.normal_at(x);
    let w = sub(y, &sphere.center);
    // |w + lambda n|^2 = r^2 with |n| = 1.
    let half_b = dot(&n, &w);
    let c0 = dot(&w, &w) - sphere.radius * sphere.radius;
    let disc = half_b * half_b - c0;
    if disc < 0.0 {
        return y.to_vec();
    }
    let lambda = -half_b + disc.sqrt();
    if lambda <= 0.0 {
        return y.to_vec();
    }
    axpy(y, lambda, &n)
}

/// The lake: unit circle sample plus the small obstacle disc.
#[derive(Debug, Clone)]
pub struct LakeScene {
    pub circle: EmbeddedSample,
    pub disc: DiscDesc,
}

/// Unit circle of `n` samples with the disc of radius 1/8 centered at
/// (0, -5/2).
pub fn lake_scene(n: usize) -> Result<LakeScene> {
    let circle = sample_circle(n, 1.0, [0.0, 0.0])?;
    let disc = DiscDesc {
        center: vec![0.0, -2.5],
        radius: 0.125,
    };
    for p in &circle.points {
        if dist(p, &disc.center) <= disc.radius {
            return Err(Error::InvalidInstance(
                "lake sample intersects the obstacle disc".into(),
            ));
        }
    }
    Ok(LakeScene { circle, disc })
}

/// Potential data of the lake: psi on the sample and the two target maps.
#[derive(Debug, Clone)]
pub struct LakePotentials {
    /// psi(x) = dist(x, D) - |x|^2 / 2 at each sample point.
    pub psi: Vec<f64>,
    /// ybar(x): unit gradient of the distance function at each sample point.
    pub ybar: Vec<Vec<f64>>,
    /// yhat(x): conjugate of ybar(x) along the outward normal ray.
    pub yhat: Vec<Vec<f64>>,
}

pub fn lake_potentials(scene: &LakeScene) -> Result<LakePotentials> {
    let body = &scene.circle.bodies[0];
    let mut psi = Vec::with_capacity(scene.circle.len());
    let mut ybar = Vec::with_capacity(scene.circle.len());
    let mut yhat = Vec::with_capacity(scene.circle.len());
    for x in &scene.circle.points {
        let d = scene.disc.distance(x)?;
        psi.push(d - 0.5 * dot(x, x));
        let g = scene.disc.distance_gradient(x)?;
        yhat.push(normal_conjugate(body, x, &g));
        ybar.push(g);
    }
    Ok(LakePotentials { psi, ybar, yhat })
}

/// Ordered nested family descriptors with the containment check.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NestedFamily {
    pub bodies: Vec<SphereDesc>,
}

impl NestedFamily {
    /// The tangent family of the bouquet construction: sphere k has center
    /// k*e1 and radius k, all touching the origin.
    pub fn tangent_at_origin(count: usize, dim: usize) -> Self {
        let bodies = (1..=count)
            .map(|k| {
                let mut center = vec![0.0; dim];
                center[0] = k as f64;
                SphereDesc {
                    center,
                    radius: k as f64,
                }
            })
            .collect();
        NestedFamily { bodies }
    }

    /// Every sampled point of body i must lie inside body i+1, strictly
    /// except within the dedup tolerance of a shared tangency point.
    pub fn validate_nesting(&self, sample: &EmbeddedSample) -> Result<()> {
        for (idx, outer) in self.bodies.iter().enumerate().skip(1) {
            for (p, &b) in sample.points.iter().zip(&sample.body_index) {
                let inner_tag = idx; // body tags are 1-based
                if b != inner_tag {
                    continue;
                }
                let gap = outer.signed_gap(p);
                if gap >= 0.0 && norm(p) > DEDUP_TOL {
                    return Err(Error::InvalidInstance(format!(
                        "nesting violated: point {p:?} of body {inner_tag} not strictly inside body {}",
                        idx + 1
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Union sample of the nested tangent boundaries, sharing the origin point.
///
/// `m` is the intrinsic dimension (1 for circles, 2 for spheres); points
/// within the dedup tolerance of the origin collapse to a single point
/// tagged body 0.
pub fn nested_boundaries(count: usize, m: usize, n_per: usize) -> Result<EmbeddedSample> {
    if count < 1 {
        return Err(Error::InvalidInstance("nested family needs L >= 1".into()));
    }
    if !(m == 1 || m == 2) {
        return Err(Error::InvalidInstance(format!(
            "intrinsic dimension must be 1 or 2, got {m}"
        )));
    }
    if n_per < 3 {
        return Err(Error::InvalidInstance("need at least 3 points per boundary".into()));
    }
    let dim = m + 1;
    let family = NestedFamily::tangent_at_origin(count, dim);

    let mut points = Vec::new();
    let mut normals = Vec::new();
    let mut tangents = Vec::new();
    let mut body_index = Vec::new();
    let mut origin_seen = false;

    // Origin normal: (0 - k e1)/k = -e1 for every body, so the merged point
    // has a well-defined frame.
    let mut origin_normal = vec![0.0; dim];
    origin_normal[0] = -1.0;

    for (bi, body) in family.bodies.iter().enumerate() {
        let per = match m {
            1 => sample_circle(n_per, body.radius, [body.center[0], body.center[1]])?,
            _ => {
                // Fibonacci sample of n_per - 1 points plus the exact
                // tangency pole at the origin.
                let base = sample_sphere(n_per.saturating_sub(1).max(3), body.radius, [
                    body.center[0],
                    body.center[1],
                    body.center[2],
                ])?;
                let mut s = base;
                s.points.push(vec![0.0; dim]);
                s.normals.push(origin_normal.clone());
                s.tangents.push(sphere_frame(&origin_normal));
                s.body_index.push(1);
                s
            }
        };
        for (k, p) in per.points.iter().enumerate() {
            if norm(p) <= DEDUP_TOL {
                if origin_seen {
                    continue;
                }
                origin_seen = true;
                points.push(vec![0.0; dim]);
                normals.push(origin_normal.clone());
                tangents.push(tangent_frame(&origin_normal)?);
                body_index.push(0);
            } else {
                points.push(p.clone());
                normals.push(per.normals[k].clone());
                tangents.push(per.tangents[k].clone());
                body_index.push(bi + 1);
            }
        }
    }

    // Lexicographic (body_index, construction index) ordering.
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by_key(|&i| (body_index[i], i));
    let sample = EmbeddedSample {
        points: order.iter().map(|&i| points[i].clone()).collect(),
        normals: order.iter().map(|&i| normals[i].clone()).collect(),
        tangents: order.iter().map(|&i| tangents[i].clone()).collect(),
        body_index: order.iter().map(|&i| body_index[i]).collect(),
        bodies: family.bodies.clone(),
    };
    sample.validate()?;
    family.validate_nesting(&sample)?;
    Ok(sample)
}

/// Barycentric point of the k-th standard simplex of the bouquet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplexPoint {
    pub barycentric: Vec<f64>,
    pub simplex_id: usize,
}

impl SimplexPoint {
    pub fn new(barycentric: Vec<f64>, simplex_id: usize) -> Result<Self> {
        if simplex_id < 1 {
            return Err(Error::InvalidInstance("simplex id must be >= 1".into()));
        }
        if barycentric.len() < 2 {
            return Err(Error::InvalidInstance("barycentric dim must be >= 2".into()));
        }
        if barycentric.iter().any(|&t| t < 0.0) {
            return Err(Error::InvalidInstance("negative barycentric entry".into()));
        }
        let sum: f64 = barycentric.iter().sum();
        if (sum - 1.0).abs() > FRAME_TOL {
            return Err(Error::InvalidInstance(format!(
                "barycentric sum {sum} != 1"
            )));
        }
        Ok(Self {
            barycentric,
            simplex_id,
        })
    }

    pub fn intrinsic_dim(&self) -> usize {
        self.barycentric.len() - 1
    }

    pub fn on_boundary(&self) -> bool {
        self.barycentric.iter().any(|&t| t == 0.0)
    }
}

// ---------------------------------------------------------------------------
// Smooth profiles. The flat-ended step Q is the normalized integral of the
// bump exp(-1/(u(1-u))); it rises 0 -> 1 on [0,1] with all derivatives zero
// at both ends. P is the running integral of (1 - Q), used to join g's
// linear segment to zero with matching slope.
// ---------------------------------------------------------------------------

const PROFILE_NODES: usize = 8192;

struct ProfileTables {
    /// Q values on the uniform grid over [0,1].
    q: Vec<f64>,
    /// P values: integral of (1 - Q) from 0.
    p: Vec<f64>,
    /// Total bump mass, the normalizer of Q's derivative.
    total: f64,
}

fn bump(u: f64) -> f64 {
    if u <= 0.0 || u >= 1.0 {
        0.0
    } else {
        (-1.0 / (u * (1.0 - u))).exp()
    }
}

fn tables() -> &'static ProfileTables {
    static TABLES: OnceLock<ProfileTables> = OnceLock::new();
    TABLES.get_or_init(|| {
        let n = PROFILE_NODES;
        let h = 1.0 / n as f64;
        let f: Vec<f64> = (0..=n).map(|i| bump(i as f64 * h)).collect();
        // Cumulative Simpson over successive node pairs; odd nodes get the
        // standard half-panel correction.
        let mut cum = vec![0.0; n + 1];
        let mut k = 0;
        while k + 2 <= n {
            let whole = h / 3.0 * (f[k] + 4.0 * f[k + 1] + f[k + 2]);
            let first = h / 12.0 * (5.0 * f[k] + 8.0 * f[k + 1] - f[k + 2]);
            cum[k + 1] = cum[k] + first;
            cum[k + 2] = cum[k] + whole;
            k += 2;
        }
        let total = cum[n];
        let q: Vec<f64> = cum.iter().map(|c| c / total).collect();
        let g: Vec<f64> = q.iter().map(|qi| 1.0 - qi).collect();
        let mut p = vec![0.0; n + 1];
        let mut k = 0;
        while k + 2 <= n {
            let whole = h / 3.0 * (g[k] + 4.0 * g[k + 1] + g[k + 2]);
            let first = h / 12.0 * (5.0 * g[k] + 8.0 * g[k + 1] - g[k + 2]);
            p[k + 1] = p[k] + first;
            p[k + 2] = p[k] + whole;
            k += 2;
        }
        ProfileTables { q, p, total }
    })
}

/// Cubic Hermite interpolation of a cumulative table whose derivative at the
/// nodes is `deriv`.
fn hermite_eval(table: &[f64], deriv: impl Fn(usize) -> f64, t: f64) -> f64 {
    let n = table.len() - 1;
    let t = t.clamp(0.0, 1.0);
    let x = t * n as f64;
    let i = (x.floor() as usize).min(n - 1);
    let s = x - i as f64;
    let h = 1.0 / n as f64;
    let (y0, y1) = (table[i], table[i + 1]);
    let (d0, d1) = (deriv(i) * h, deriv(i + 1) * h);
    let s2 = s * s;
    let s3 = s2 * s;
    y0 * (2.0 * s3 - 3.0 * s2 + 1.0)
        + d0 * (s3 - 2.0 * s2 + s)
        + y1 * (-2.0 * s3 + 3.0 * s2)
        + d1 * (s3 - s2)
}

/// Flat-ended smooth step: Q(0)=0, Q(1)=1, all derivatives vanish at both ends.
pub fn smooth_step(t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    if t >= 1.0 {
        return 1.0;
    }
    let tab = tables();
    let n = PROFILE_NODES;
    let q = hermite_eval(&tab.q, |i| bump(i as f64 / n as f64) / tab.total, t);
    q.clamp(0.0, 1.0)
}

/// Integral of (1 - Q) over [0, t]; reaches 1/2 at t = 1.
fn step_tail_integral(t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let tab = tables();
    if t >= 1.0 {
        return tab.p[PROFILE_NODES];
    }
    hermite_eval(&tab.p, |i| 1.0 - tab.q[i], t)
}

/// Radial speed-up profile f: nondecreasing, 1 on [0, 1/2], 2 at 1 with all
/// derivatives flat there.
pub fn profile_f(s: f64) -> f64 {
    if s <= 0.5 {
        1.0
    } else {
        1.0 + smooth_step(2.0 * s - 1.0)
    }
}

/// Boundary-snap profile g for intrinsic dimension m: 1 - 3(m+1)s near zero,
/// smoothly joined to 0, vanishing from 1/(2(m+1)) on.
pub fn profile_g(s: f64, m: usize) -> f64 {
    let mp = (m + 1) as f64;
    let a = 1.0 / (4.0 * mp);
    let w = 1.0 / (6.0 * mp);
    if s <= 0.0 {
        1.0
    } else if s <= a {
        1.0 - 3.0 * mp * s
    } else if s < a + w {
        // g(a) = 1/4 and g'(a) = -3(m+1); the join integrates a flat-ended
        // taper of the slope, so value and slope match and g lands at zero.
        0.25 - 0.5 * step_tail_integral((s - a) / w)
    } else {
        0.0
    }
}

/// Orthonormal (Helmert) basis of the sum-zero hyperplane in R^{m+1}.
fn helmert_basis(m: usize) -> Vec<Vec<f64>> {
    let mut basis = Vec::with_capacity(m);
    for k in 1..=m {
        let mut v = vec![0.0; m + 1];
        let norm = ((k * (k + 1)) as f64).sqrt();
        for item in v.iter_mut().take(k) {
            *item = 1.0 / norm;
        }
        v[k] = -(k as f64) / norm;
        basis.push(v);
    }
    basis
}

fn barycenter(dim: usize) -> Vec<f64> {
    vec![1.0 / dim as f64; dim]
}

/// Distance along the outward ray from the barycenter through t to the
/// simplex boundary.
fn ray_to_boundary(t: &[f64], u: &[f64]) -> f64 {
    let mut rho = f64::INFINITY;
    for (ti, ui) in t.iter().zip(u) {
        if *ui < 0.0 {
            rho = rho.min(-ti / ui);
        }
    }
    rho
}

/// The Lipschitz bijection from the standard m-simplex onto the unit m-disc:
/// identity near the barycenter, radial snap of the boundary onto the unit
/// circle. Returns coordinates in the Helmert basis of the simplex plane.
pub fn simplex_to_disc(t: &SimplexPoint) -> Vec<f64> {
    let dim = t.barycentric.len();
    let m = dim - 1;
    let tbar = barycenter(dim);
    let offset = sub(&t.barycentric, &tbar);
    let r = norm(&offset);
    let basis = helmert_basis(m);
    if r == 0.0 {
        return vec![0.0; m];
    }
    let u = scale(&offset, 1.0 / r);
    let rho = ray_to_boundary(&t.barycentric, &u);
    let g = profile_g(rho, m);
    // G0(t) = tbar + (1 - g) (t - tbar) + g u, expressed relative to tbar.
    let image = axpy(&scale(&offset, 1.0 - g), g, &u);
    basis.iter().map(|b| dot(b, &image)).collect()
}

/// Great-circle exponential from the north pole: the closed unit m-disc onto
/// the unit m-sphere, boundary to the south pole exactly.
pub fn disc_to_sphere(v: &[f64]) -> Result<Vec<f64>> {
    let m = v.len();
    let r = norm(v);
    if r > 1.0 + FRAME_TOL {
        return Err(Error::InvalidParameter(format!(
            "disc point has norm {r} > 1"
        )));
    }
    let mut out = vec![0.0; m + 1];
    if r >= 1.0 - FRAME_TOL {
        // f(1) = 2 makes theta = pi: the south pole. Boundary points reach
        // this branch with norm 1 up to roundoff and are pinned exactly.
        out[m] = -1.0;
        return Ok(out);
    }
    if r == 0.0 {
        out[m] = 1.0;
        return Ok(out);
    }
    let theta = std::f64::consts::FRAC_PI_2 * profile_f(r) * r;
    let s = theta.sin() / r;
    for (o, vi) in out.iter_mut().zip(v) {
        *o = s * vi;
    }
    out[m] = theta.cos();
    Ok(out)
}

/// Embeds a simplex point into ambient (m+1)-space on the sphere of radius k
/// centered at k e1, collapsing all simplex boundaries onto the origin.
///
/// The abstract sphere is rotated so its south pole lands on the origin:
/// (z_1, ..., z_m, z_{m+1}) -> k e1 + k (z_{m+1}, z_1, ..., z_m).
pub fn bouquet_embed(t: &SimplexPoint) -> Result<Vec<f64>> {
    let k = t.simplex_id as f64;
    let m = t.intrinsic_dim();
    let v = simplex_to_disc(t);
    let z = disc_to_sphere(&v)?;
    let mut out = vec![0.0; m + 1];
    out[0] = k + k * z[m];
    for i in 0..m {
        out[i + 1] = k * z[i];
    }
    Ok(out)
}

/// Embedded sample of a bouquet of `count` spheres obtained from per-simplex
/// interior grids; every boundary point collapses to the shared origin
/// (body 0), emitted once, first.
pub fn bouquet_sample(count: usize, m: usize, grid: usize) -> Result<EmbeddedSample> {
    if count < 1 || grid < 2 {
        return Err(Error::InvalidInstance(
            "bouquet needs at least one simplex and grid >= 2".into(),
        ));
    }
    if !(m == 1 || m == 2) {
        return Err(Error::InvalidInstance(format!(
            "intrinsic dimension must be 1 or 2, got {m}"
        )));
    }
    let dim = m + 1;
    let family = NestedFamily::tangent_at_origin(count, dim);
    let mut points = Vec::new();
    let mut normals = Vec::new();
    let mut tangents = Vec::new();
    let mut body_index = Vec::new();

    let mut origin_normal = vec![0.0; dim];
    origin_normal[0] = -1.0;
    points.push(vec![0.0; dim]);
    normals.push(origin_normal.clone());
    tangents.push(tangent_frame(&origin_normal)?);
    body_index.push(0);

    for k in 1..=count {
        let body = &family.bodies[k - 1];
        let interior: Vec<Vec<f64>> = match m {
            1 => (1..grid)
                .map(|j| {
                    let s = j as f64 / grid as f64;
                    vec![1.0 - s, s]
                })
                .collect(),
            _ => {
                let mut pts = Vec::new();
                for i in 1..grid {
                    for j in 1..grid - i {
                        let l = grid - i - j;
                        if l >= 1 {
                            let g = grid as f64;
                            pts.push(vec![i as f64 / g, j as f64 / g, l as f64 / g]);
                        }
                    }
                }
                pts
            }
        };
        for bary in interior {
            let sp = SimplexPoint::new(bary, k)?;
            let p = bouquet_embed(&sp)?;
            if norm(&p) <= DEDUP_TOL {
                continue;
            }
            let nu = body.normal_at(&p);
            // Re-unitize: the embedding is on-sphere to roundoff only.
            let nu = normalize(&nu);
            tangents.push(tangent_frame(&nu)?);
            normals.push(nu);
            points.push(p);
            body_index.push(k);
        }
    }

    let sample = EmbeddedSample {
        points,
        normals,
        tangents,
        body_index,
        bodies: family.bodies,
    };
    sample.validate()?;
    Ok(sample)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        dist(a, b) <= tol
    }

    #[test]
    fn circle_rejects_small_n() {
        assert!(sample_circle(2, 1.0, [0.0, 0.0]).is_err());
    }

    #[test]
    fn circle_four_points_axis_aligned() {
        let s = sample_circle(4, 1.0, [0.0, 0.0]).unwrap();
        let expect = [[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]];
        for (p, e) in s.points.iter().zip(expect.iter()) {
            assert!(close(p, e, 1e-12), "{p:?} vs {e:?}");
        }
    }

    #[test]
    fn circle_radius_and_center_respected() {
        let s = sample_circle(3, 2.0, [1.0, 0.0]).unwrap();
        for p in &s.points {
            assert!((dist(p, &[1.0, 0.0]) - 2.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn circle_spacing_uniform_chord() {
        let s = sample_circle(360, 1.0, [0.0, 0.0]).unwrap();
        let expected = 2.0 * (std::f64::consts::PI / 360.0).sin();
        for k in 0..360 {
            let d = dist(&s.points[k], &s.points[(k + 1) % 360]);
            assert!((d - expected).abs() <= 1e-12, "chord {k}: {d} vs {expected}");
        }
    }

    // Independent oracle: bracket sign changes of the signed gap along the
    // ray and bisect; the conjugate point is the largest positive root.
    fn conjugate_by_scan(sphere: &SphereDesc, x: &[f64], y: &[f64]) -> Vec<f64> {
        let n = sphere.normal_at(x);
        let g = |l: f64| sphere.signed_gap(&axpy(y, l, &n));
        let step = 1e-4;
        let mut best: Option<f64> = None;
        let mut l = step;
        let mut prev = g(step * 0.5);
        while l <= 8.0 {
            let cur = g(l);
            if (prev <= 0.0) != (cur <= 0.0) {
                let (mut lo, mut hi) = (l - step, l);
                for _ in 0..80 {
                    let mid = 0.5 * (lo + hi);
                    if (g(lo) <= 0.0) == (g(mid) <= 0.0) {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                best = Some(0.5 * (lo + hi));
            }
            prev = cur;
            l += step;
        }
        match best {
            Some(root) if root > 1e-9 => axpy(y, root, &n),
            _ => y.to_vec(),
        }
    }

    #[test]
    fn normal_conjugate_matches_scan_oracle() {
        let unit = SphereDesc {
            center: vec![0.0, 0.0],
            radius: 1.0,
        };
        // North-pole source, south-pole target: the ray re-enters and exits
        // at the north pole itself.
        let got = normal_conjugate(&unit, &[0.0, 1.0], &[0.0, -1.0]);
        assert!(close(&got, &[0.0, 1.0], 1e-12));
        let oracle = conjugate_by_scan(&unit, &[0.0, 1.0], &[0.0, -1.0]);
        assert!(close(&got, &oracle, 1e-5));

        // Off-axis case.
        let x = [(0.3f64).cos(), (0.3f64).sin()];
        let y = [0.2, -0.4];
        let got = normal_conjugate(&unit, &x, &y);
        let oracle = conjugate_by_scan(&unit, &x, &y);
        assert!(close(&got, &oracle, 1e-5), "{got:?} vs {oracle:?}");
        assert!(unit.signed_gap(&got).abs() < 1e-12);
    }

    #[test]
    fn normal_conjugate_tangential_fallback() {
        let unit = SphereDesc {
            center: vec![0.0, 0.0],
            radius: 1.0,
        };
        // Outward ray from a point on the sphere leaves immediately.
        let got = normal_conjugate(&unit, &[1.0, 0.0], &[1.0, 0.0]);
        assert_eq!(got, vec![1.0, 0.0]);
    }

    #[test]
    fn normal_conjugate_miss_returns_y() {
        let unit = SphereDesc {
            center: vec![0.0, 0.0],
            radius: 1.0,
        };
        let y = [3.0, 3.0];
        let got = normal_conjugate(&unit, &[1.0, 0.0], &y);
        assert_eq!(got, y.to_vec());
    }

    #[test]
    fn normal_conjugate_result_parallel_to_normal() {
        let unit = SphereDesc {
            center: vec![0.5, -0.25],
            radius: 2.0,
        };
        for k in 0..50 {
            let theta = 0.13 * k as f64;
            let x = [
                0.5 + 2.0 * theta.cos(),
                -0.25 + 2.0 * theta.sin(),
            ];
            let y = [0.3 * (k as f64 * 0.7).sin(), 0.4 * (k as f64 * 0.3).cos()];
            let z = normal_conjugate(&unit, &x, &y);
            let d = sub(&z, &y);
            let n = unit.normal_at(&x);
            // Component of d orthogonal to n must vanish.
            let ortho = axpy(&d, -dot(&d, &n), &n);
            assert!(norm(&ortho) <= 1e-10);
            assert!(unit.signed_gap(&z).abs() <= 1e-10 || close(&z, &y, 0.0));
        }
    }

    #[test]
    fn lake_scene_matches_construction() {
        let scene = lake_scene(360).unwrap();
        assert_eq!(scene.disc.center, vec![0.0, -2.5]);
        assert_eq!(scene.disc.radius, 0.125);
        for p in &scene.circle.points {
            assert!(dist(p, &scene.disc.center) > scene.disc.radius);
        }
        let south_dist = scene.disc.distance(&[0.0, -1.0]).unwrap();
        assert!((south_dist - 1.375).abs() < 1e-15);
    }

    #[test]
    fn lake_potentials_values() {
        let scene = lake_scene(360).unwrap();
        let pot = lake_potentials(&scene).unwrap();
        // South pole sits at index 270 for the standard angular grid.
        let south = 270;
        assert!(close(&scene.circle.points[south], &[0.0, -1.0], 1e-12));
        assert!(close(&pot.ybar[south], &[0.0, 1.0], 1e-12));
        assert!((pot.psi[south] - 0.875).abs() < 1e-12);
        for g in &pot.ybar {
            assert!((norm(g) - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn nested_single_is_unit_circle_shifted() {
        let s = nested_boundaries(1, 1, 360).unwrap();
        assert_eq!(s.bodies.len(), 1);
        for p in &s.points {
            assert!((dist(p, &[1.0, 0.0]) - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn nested_strict_containment_except_origin() {
        let s = nested_boundaries(3, 1, 360).unwrap();
        for (p, &b) in s.points.iter().zip(&s.body_index) {
            if b == 0 || b == 3 {
                continue;
            }
            let outer = &s.bodies[b]; // body b+1 descriptor
            assert!(
                outer.contains_strictly(p) || norm(p) <= DEDUP_TOL,
                "point {p:?} of body {b} not inside body {}",
                b + 1
            );
        }
    }

    #[test]
    fn nested_origin_deduplicated() {
        let s = nested_boundaries(2, 1, 4).unwrap();
        let origins = s
            .points
            .iter()
            .filter(|p| norm(p) <= DEDUP_TOL)
            .count();
        assert_eq!(origins, 1);
        assert_eq!(s.body_index.iter().filter(|&&b| b == 0).count(), 1);
        // 4 + 4 points, one shared.
        assert_eq!(s.len(), 7);
    }

    #[test]
    fn profiles_hit_their_pins() {
        assert_eq!(profile_f(0.0), 1.0);
        assert_eq!(profile_f(0.5), 1.0);
        assert!((profile_f(1.0) - 2.0).abs() < 1e-12);
        let mut last = 1.0;
        for i in 0..=1000 {
            let v = profile_f(i as f64 / 1000.0);
            assert!(v >= last - 1e-12, "f not nondecreasing at {i}");
            last = v;
        }
        for m in [1usize, 2] {
            let mp = (m + 1) as f64;
            assert_eq!(profile_g(0.0, m), 1.0);
            let a = 1.0 / (4.0 * mp);
            assert!((profile_g(a, m) - 0.25).abs() < 1e-12);
            assert_eq!(profile_g(1.0 / (2.0 * mp), m), 0.0);
            let mut last = 1.0;
            for i in 0..=1000 {
                let v = profile_g(i as f64 / 1000.0, m);
                assert!(v <= last + 1e-12, "g not nonincreasing at {i}");
                last = v;
            }
        }
    }

    #[test]
    fn simplex_center_maps_to_disc_center() {
        let t = SimplexPoint::new(vec![0.5, 0.5], 1).unwrap();
        assert_eq!(simplex_to_disc(&t), vec![0.0]);
        let t = SimplexPoint::new(vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], 1).unwrap();
        let v = simplex_to_disc(&t);
        assert!(norm(&v) <= 1e-12);
    }

    #[test]
    fn simplex_vertex_maps_to_disc_boundary() {
        for m in [1usize, 2] {
            let mut bary = vec![0.0; m + 1];
            bary[0] = 1.0;
            let t = SimplexPoint::new(bary, 1).unwrap();
            let v = simplex_to_disc(&t);
            assert!((norm(&v) - 1.0).abs() <= 1e-12, "m={m}: |v| = {}", norm(&v));
        }
    }

    #[test]
    fn simplex_midpoint_stays_on_ray_inside() {
        // Midpoint of the segment from the barycenter to a vertex, m = 2.
        let dim = 3;
        let tbar = barycenter(dim);
        let vertex = vec![1.0, 0.0, 0.0];
        let mid: Vec<f64> = tbar
            .iter()
            .zip(&vertex)
            .map(|(a, b)| 0.5 * (a + b))
            .collect();
        let t = SimplexPoint::new(mid, 1).unwrap();
        let v = simplex_to_disc(&t);
        assert!(norm(&v) < 1.0);
        // Collinearity with the vertex image direction.
        let tv = SimplexPoint::new(vertex, 1).unwrap();
        let vv = simplex_to_disc(&tv);
        let cosang = dot(&v, &vv) / (norm(&v) * norm(&vv));
        assert!((cosang - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn simplex_radial_monotonicity_on_rays() {
        for m in [1usize, 2] {
            let dim = m + 1;
            let tbar = barycenter(dim);
            for trial in 0..100 {
                // Deterministic spread of ray directions via vertex mixtures;
                // skip targets that collapse onto the barycenter.
                let w0 = (trial as f64 * 0.37).fract();
                let mut target = vec![0.0; dim];
                target[0] = w0;
                target[1] = 1.0 - w0;
                if dim == 3 {
                    target[2] = 0.0;
                    let w1 = (trial as f64 * 0.61).fract();
                    target[1] = (1.0 - w0) * w1;
                    target[2] = (1.0 - w0) * (1.0 - w1);
                }
                if dist(&target, &tbar) < 1e-3 {
                    continue;
                }
                let mut last = -1.0;
                for step in 1..=40 {
                    let alpha = step as f64 / 40.0;
                    let bary: Vec<f64> = tbar
                        .iter()
                        .zip(&target)
                        .map(|(c, v)| c + alpha * (v - c))
                        .collect();
                    let t = SimplexPoint::new(bary, 1).unwrap();
                    let r = norm(&simplex_to_disc(&t));
                    assert!(r > last, "m={m} trial={trial} step={step}: {r} <= {last}");
                    last = r;
                }
            }
        }
    }

    #[test]
    fn disc_to_sphere_pins_poles() {
        let n = disc_to_sphere(&[0.0]).unwrap();
        assert_eq!(n, vec![0.0, 1.0]);
        let s = disc_to_sphere(&[1.0]).unwrap();
        assert_eq!(s, vec![0.0, -1.0]);
        let s2 = disc_to_sphere(&[0.6, 0.8]).unwrap();
        assert_eq!(s2, vec![0.0, 0.0, -1.0]);
    }

    #[test]
    fn disc_to_sphere_half_radius_closed_form() {
        // f = 1 below 1/2 so theta = pi/4 exactly.
        let p = disc_to_sphere(&[0.5]).unwrap();
        let expect = [
            std::f64::consts::FRAC_PI_4.sin(),
            std::f64::consts::FRAC_PI_4.cos(),
        ];
        assert!(close(&p, &expect, 1e-12));
    }

    #[test]
    fn disc_to_sphere_unit_norm() {
        for k in 0..200 {
            let r = (k as f64 / 199.0).min(1.0);
            let ang = k as f64 * 0.71;
            let v = [r * ang.cos(), r * ang.sin()];
            let p = disc_to_sphere(&v).unwrap();
            assert!((norm(&p) - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn bouquet_boundary_collapses_to_origin() {
        for k in 1..=3usize {
            for bary in [vec![1.0, 0.0], vec![0.0, 1.0]] {
                let t = SimplexPoint::new(bary, k).unwrap();
                let p = bouquet_embed(&t).unwrap();
                assert_eq!(p, vec![0.0, 0.0], "simplex {k}");
            }
            let t = SimplexPoint::new(vec![0.0, 0.25, 0.75], k).unwrap();
            let p = bouquet_embed(&t).unwrap();
            assert_eq!(p, vec![0.0, 0.0, 0.0]);
        }
    }

    #[test]
    fn bouquet_center_antipodal_point() {
        let t = SimplexPoint::new(vec![0.5, 0.5], 1).unwrap();
        let p = bouquet_embed(&t).unwrap();
        assert!(close(&p, &[2.0, 0.0], 1e-12));
    }

    #[test]
    fn bouquet_points_on_their_spheres() {
        for k in 1..=3usize {
            for j in 1..12 {
                let s = j as f64 / 12.0;
                let t = SimplexPoint::new(vec![1.0 - s, s], k).unwrap();
                let p = bouquet_embed(&t).unwrap();
                let c = [k as f64, 0.0];
                assert!((dist(&p, &c) - k as f64).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn bouquet_sample_shares_one_origin() {
        let s = bouquet_sample(2, 1, 12).unwrap();
        assert_eq!(s.body_index.iter().filter(|&&b| b == 0).count(), 1);
        assert_eq!(s.body_index[0], 0);
        s.validate().unwrap();
    }

    #[test]
    fn sample_json_round_trip() {
        let s = sample_circle(8, 1.0, [0.0, 0.0]).unwrap();
        let j = SampleJson::from(&s);
        let text = serde_json::to_string(&j).unwrap();
        let back: SampleJson = serde_json::from_str(&text).unwrap();
        assert_eq!(j.points, back.points);
        assert_eq!(j.body_index, back.body_index);
    }
}
