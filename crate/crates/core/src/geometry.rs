//! Points in the unit ball, hyperplanes, and totally-separable packings.
//!
//! A packing is a point set where every pair is split by a unit-norm hyperplane that keeps
//! distance at least `epsilon` from *every* point of the set. Two constructions are provided:
//! an axis-aligned grid inside the inscribed cube and `d` vertices of the inscribed regular
//! simplex. Both carry explicit witnesses, so verification never searches for separators.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::{dot, floor_tol, norm, TOL};

/// Default cap on the number of grid cells enumerated by [`grid_ts_packing`].
pub const DEFAULT_POINT_CAP: usize = 1_000_000;

/// A point in the closed unit ball of `R^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct PointD(Vec<f64>);

impl PointD {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::ZeroDimension);
        }
        let n = norm(&coords);
        if !n.is_finite() || n > 1.0 + TOL {
            return Err(Error::OutsideUnitBall(n));
        }
        Ok(PointD(coords))
    }

    /// Builds a point without the norm check; callers guarantee the invariant.
    pub(crate) fn from_vec_unchecked(coords: Vec<f64>) -> Self {
        PointD(coords)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    /// Maps `x` to `(x, 1) / sqrt(2)`, which stays in the unit ball of `R^{d+1}` and turns an
    /// affine hyperplane into a homogeneous one.
    pub fn homogenized(&self) -> PointD {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let mut v: Vec<f64> = self.0.iter().map(|c| c * s).collect();
        v.push(s);
        PointD(v)
    }
}

impl TryFrom<Vec<f64>> for PointD {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        PointD::new(v)
    }
}

impl From<PointD> for Vec<f64> {
    fn from(p: PointD) -> Self {
        p.0
    }
}

/// A unit-norm weight vector plus a bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperplane {
    #[serde(rename = "w")]
    weights: Vec<f64>,
    #[serde(rename = "b")]
    bias: f64,
}

impl Hyperplane {
    /// Scales `(weights, bias)` jointly so that the weights have unit norm (the geometric
    /// hyperplane is unchanged), then checks the bias range.
    pub fn new(weights: Vec<f64>, bias: f64) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::ZeroDimension);
        }
        let n = norm(&weights);
        if !n.is_finite() || n <= 0.0 {
            return Err(Error::ZeroNormal);
        }
        let (weights, bias) = if (n - 1.0).abs() > TOL {
            (weights.iter().map(|w| w / n).collect(), bias / n)
        } else {
            (weights, bias)
        };
        if !(-1.0 - TOL..=1.0 + TOL).contains(&bias) {
            return Err(Error::BiasOutOfRange(bias));
        }
        Ok(Hyperplane { weights, bias })
    }

    /// Homogeneous hyperplane through the origin.
    pub fn through_origin(weights: Vec<f64>) -> Result<Self> {
        Hyperplane::new(weights, 0.0)
    }

    pub(crate) fn from_parts_unchecked(weights: Vec<f64>, bias: f64) -> Self {
        Hyperplane { weights, bias }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    /// `<w, x> + b`.
    pub fn eval(&self, x: &[f64]) -> f64 {
        dot(&self.weights, x) + self.bias
    }

    pub fn side(&self, x: &[f64]) -> i8 {
        crate::sign(self.eval(x))
    }

    /// The same hyperplane lifted to `R^{d+1}` so that
    /// `eval_homogeneous(x.homogenized())` has the sign of `eval(x)`.
    pub fn homogenized(&self) -> Hyperplane {
        let mut w = self.weights.clone();
        w.push(self.bias);
        let n = norm(&w);
        Hyperplane {
            weights: w.into_iter().map(|c| c / n).collect(),
            bias: 0.0,
        }
    }
}

/// How a packing resolves the witness hyperplane of a point pair.
#[derive(Debug, Clone, PartialEq)]
enum Witnesses {
    /// Explicit `(i, j) -> hyperplane` table with `i < j`.
    Table(HashMap<(usize, usize), usize>),
    /// Axis grid: points are cells in mixed radix, hyperplanes are `(axis, k)` boundaries.
    AxisGrid { dim: usize, half: usize },
    /// Witness of `(i, j)` is the hyperplane attached to point `min(i, j)`.
    LowerIndex,
}

/// A totally-separable packing with explicit witness hyperplanes.
#[derive(Debug, Clone, PartialEq)]
pub struct TsPacking {
    epsilon: f64,
    points: Vec<PointD>,
    hyperplanes: Vec<Hyperplane>,
    witnesses: Witnesses,
}

/// On-disk form: `{epsilon, points, hyperplanes: [{w, b}], witnesses: [[i, j, h]]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PackingDocument {
    epsilon: f64,
    points: Vec<Vec<f64>>,
    hyperplanes: Vec<Hyperplane>,
    witnesses: Vec<[usize; 3]>,
}

impl TsPacking {
    /// Builds a packing from an explicit witness list of `(i, j, hyperplane)` triples.
    pub fn from_parts(
        epsilon: f64,
        points: Vec<PointD>,
        hyperplanes: Vec<Hyperplane>,
        witnesses: impl IntoIterator<Item = (usize, usize, usize)>,
    ) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon <= 1.0) {
            return Err(Error::EpsOutOfRange(epsilon));
        }
        let dim = points.first().map(PointD::dim);
        if let Some(d) = dim {
            for p in &points {
                if p.dim() != d {
                    return Err(Error::DimensionMismatch { expected: d, got: p.dim() });
                }
            }
            for h in &hyperplanes {
                if h.dim() != d {
                    return Err(Error::DimensionMismatch { expected: d, got: h.dim() });
                }
            }
        }
        let mut table = HashMap::new();
        for (i, j, h) in witnesses {
            if i == j || i >= points.len() || j >= points.len() || h >= hyperplanes.len() {
                return Err(Error::Malformed(format!("witness entry [{i}, {j}, {h}] out of range")));
            }
            table.insert((i.min(j), i.max(j)), h);
        }
        Ok(TsPacking {
            epsilon,
            points,
            hyperplanes,
            witnesses: Witnesses::Table(table),
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn points(&self) -> &[PointD] {
        &self.points
    }

    pub fn hyperplanes(&self) -> &[Hyperplane] {
        &self.hyperplanes
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.points.first().map(PointD::dim)
    }

    /// Witness hyperplane index for the unordered pair `{i, j}`.
    pub fn witness(&self, i: usize, j: usize) -> Option<usize> {
        if i == j || i >= self.points.len() || j >= self.points.len() {
            return None;
        }
        let (a, b) = (i.min(j), i.max(j));
        match &self.witnesses {
            Witnesses::Table(t) => t.get(&(a, b)).copied(),
            Witnesses::LowerIndex => Some(a),
            Witnesses::AxisGrid { dim, half } => {
                let cells = 2 * half;
                let (ca, cb) = (grid_cell(a, *dim, cells), grid_cell(b, *dim, cells));
                let axis = (0..*dim).find(|&ax| ca[ax] != cb[ax])?;
                let (lo, hi) = (ca[axis].min(cb[axis]), ca[axis].max(cb[axis]));
                // Boundary m sits between cells m-1 and m; take the one nearest the midpoint.
                let m = (lo + hi).div_ceil(2);
                Some(axis * (cells + 1) + (cells - m))
            }
        }
    }

    /// Sorted distinct hyperplane indices used as witnesses by some pair.
    pub fn witness_hyperplanes(&self) -> Vec<usize> {
        let n = self.points.len();
        let mut used = vec![false; self.hyperplanes.len()];
        for i in 0..n {
            for j in i + 1..n {
                if let Some(h) = self.witness(i, j) {
                    used[h] = true;
                }
            }
        }
        used.iter().enumerate().filter(|(_, &u)| u).map(|(h, _)| h).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let n = self.points.len();
        let mut witnesses = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 0..n {
            for j in i + 1..n {
                if let Some(h) = self.witness(i, j) {
                    witnesses.push([i, j, h]);
                }
            }
        }
        let doc = PackingDocument {
            epsilon: self.epsilon,
            points: self.points.iter().map(|p| p.coords().to_vec()).collect(),
            hyperplanes: self.hyperplanes.clone(),
            witnesses,
        };
        serde_json::to_string_pretty(&doc).map_err(|e| Error::Malformed(e.to_string()))
    }

    /// Parses a packing document. Hyperplanes are kept verbatim so that verification can
    /// report non-unit normals instead of silently fixing them.
    pub fn from_json(s: &str) -> Result<Self> {
        let doc: PackingDocument =
            serde_json::from_str(s).map_err(|e| Error::Malformed(e.to_string()))?;
        let points = doc.points.into_iter().map(PointD::new).collect::<Result<Vec<_>>>()?;
        let hyperplanes = doc
            .hyperplanes
            .into_iter()
            .map(|h| Hyperplane::from_parts_unchecked(h.weights, h.bias))
            .collect();
        TsPacking::from_parts(
            doc.epsilon,
            points,
            hyperplanes,
            doc.witnesses.into_iter().map(|[i, j, h]| (i, j, h)),
        )
    }
}

fn grid_cell(mut index: usize, dim: usize, cells: usize) -> Vec<usize> {
    let mut c = vec![0; dim];
    for ax in (0..dim).rev() {
        c[ax] = index % cells;
        index /= cells;
    }
    c
}

/// `floor(1 / (2 eps sqrt(d)))`, the number of cells per half-axis.
fn grid_half_cells(dim: usize, eps: f64) -> usize {
    floor_tol(1.0 / (2.0 * eps * (dim as f64).sqrt())).max(0.0) as usize
}

/// Cell-centre packing of the axis grid inside the cube inscribed in the unit ball.
pub fn grid_ts_packing(dim: usize, eps: f64) -> Result<TsPacking> {
    grid_ts_packing_capped(dim, eps, DEFAULT_POINT_CAP)
}

pub fn grid_ts_packing_capped(dim: usize, eps: f64, cap: usize) -> Result<TsPacking> {
    if dim == 0 {
        return Err(Error::ZeroDimension);
    }
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::EpsOutOfRange(eps));
    }
    let limit = 1.0 / (2.0 * (dim as f64).sqrt());
    if eps > limit * (1.0 + TOL) {
        return Err(Error::EpsTooLarge { eps, dim, limit });
    }
    let half = grid_half_cells(dim, eps);
    let cells = 2 * half;
    let count = (cells as u128).checked_pow(dim as u32).unwrap_or(u128::MAX);
    if count > cap as u128 {
        return Err(Error::DimTooLargeForEnumeration { count, cap });
    }
    let count = count as usize;

    let centre = |j: usize| (2.0 * (j as f64 - half as f64) + 1.0) * eps;
    let points = (0..count)
        .map(|idx| {
            let cell = grid_cell(idx, dim, cells);
            PointD::from_vec_unchecked(cell.into_iter().map(centre).collect())
        })
        .collect();

    // Hyperplane (axis, k) for k in -half..=half is (e_axis, 2 k eps); stored at
    // axis * (cells + 1) + (k + half).
    let mut hyperplanes = Vec::with_capacity(dim * (cells + 1));
    for axis in 0..dim {
        for k in -(half as i64)..=(half as i64) {
            let mut w = vec![0.0; dim];
            w[axis] = 1.0;
            hyperplanes.push(Hyperplane::from_parts_unchecked(w, 2.0 * k as f64 * eps));
        }
    }
    Ok(TsPacking {
        epsilon: eps,
        points,
        hyperplanes,
        witnesses: Witnesses::AxisGrid { dim, half },
    })
}

/// `d` of the `d + 1` vertices of the regular simplex inscribed in the unit sphere, each with
/// witness hyperplane `(v_i, -1/2)`; `epsilon = 1/2`.
pub fn simplex_ts_packing(dim: usize) -> Result<TsPacking> {
    if dim == 0 {
        return Err(Error::ZeroDimension);
    }
    let vertices = simplex_vertices(dim);
    let hyperplanes = vertices
        .iter()
        .map(|v| Hyperplane::from_parts_unchecked(v.clone(), -0.5))
        .collect();
    Ok(TsPacking {
        epsilon: 0.5,
        points: vertices.into_iter().map(PointD::from_vec_unchecked).collect(),
        hyperplanes,
        witnesses: Witnesses::LowerIndex,
    })
}

/// Cholesky factor of the Gram matrix `(1 + 1/d) I - (1/d) J`: row `i` is a unit vector in
/// `span(e_1..e_i)` with inner product `-1/d` to every earlier row.
fn simplex_vertices(dim: usize) -> Vec<Vec<f64>> {
    let off = -1.0 / dim as f64;
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(dim);
    for i in 0..dim {
        let mut row = vec![0.0; dim];
        for j in 0..i {
            let partial: f64 = (0..j).map(|k| row[k] * rows[j][k]).sum();
            row[j] = (off - partial) / rows[j][j];
        }
        let sq: f64 = row[..i].iter().map(|c| c * c).sum();
        row[i] = (1.0 - sq).max(0.0).sqrt();
        rows.push(row);
    }
    rows
}

/// Why a pair failed verification.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    NonUnitNormal { hyperplane: usize, norm: f64 },
    SameSide { hyperplane: usize },
    MarginBelowEpsilon { hyperplane: usize, margin: f64 },
    NotBisecting { hyperplane: usize, residual: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub passed: bool,
    pub strict: bool,
    pub pairs_checked: usize,
    /// First violating pair in lexicographic order, with the reason.
    pub violation: Option<(usize, usize, Violation)>,
}

/// Checks every pair against its witness.
///
/// Relaxed mode requires a unit normal, opposite signs on the pair, and distance at least
/// `epsilon - 1e-9` from every packing point. Strict mode additionally requires the pair to
/// be mirrored: `<w, x_i> + b = -(<w, x_j> + b)` within `1e-9`.
pub fn verify_ts_packing(p: &TsPacking, strict: bool) -> Result<VerificationReport> {
    let n = p.points.len();
    let h_count = p.hyperplanes.len();
    // values[h][k] = <w_h, x_k> + b_h; computed lazily per used hyperplane.
    let mut values: Vec<Option<Vec<f64>>> = vec![None; h_count];
    let mut min_abs = vec![f64::INFINITY; h_count];
    let mut pairs_checked = 0;
    for i in 0..n {
        for j in i + 1..n {
            let h = p.witness(i, j).ok_or(Error::MissingWitness(i, j))?;
            let plane = &p.hyperplanes[h];
            if plane.dim() != p.points[i].dim() {
                return Err(Error::DimensionMismatch { expected: p.points[i].dim(), got: plane.dim() });
            }
            if values[h].is_none() {
                let v: Vec<f64> = p.points.iter().map(|x| plane.eval(x.coords())).collect();
                min_abs[h] = v.iter().fold(f64::INFINITY, |m, a| m.min(a.abs()));
                values[h] = Some(v);
            }
            let v = values[h].as_ref().expect("filled above");
            pairs_checked += 1;
            let fail = |why| {
                Ok(VerificationReport { passed: false, strict, pairs_checked, violation: Some((i, j, why)) })
            };
            let wn = norm(plane.weights());
            if (wn - 1.0).abs() > TOL {
                return fail(Violation::NonUnitNormal { hyperplane: h, norm: wn });
            }
            if crate::sign(v[i]) == crate::sign(v[j]) {
                return fail(Violation::SameSide { hyperplane: h });
            }
            if min_abs[h] < p.epsilon - TOL {
                return fail(Violation::MarginBelowEpsilon { hyperplane: h, margin: min_abs[h] });
            }
            if strict && (v[i] + v[j]).abs() > TOL {
                return fail(Violation::NotBisecting { hyperplane: h, residual: v[i] + v[j] });
            }
        }
    }
    Ok(VerificationReport { passed: true, strict, pairs_checked, violation: None })
}

/// Known bounds on the packing number.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TsBounds {
    /// `max{(2 floor(1/(2 eps sqrt d)))^d, d}`, saturating.
    pub lower: u128,
    /// `(1.5 / eps)^d`.
    pub upper: f64,
}

impl TsBounds {
    /// The grid term of the lower bound on its own.
    pub fn grid_term(dim: usize, eps: f64) -> u128 {
        ((2 * grid_half_cells(dim, eps)) as u128)
            .checked_pow(dim as u32)
            .unwrap_or(u128::MAX)
    }
}

pub fn ts_bounds(dim: usize, eps: f64) -> Result<TsBounds> {
    if dim == 0 {
        return Err(Error::ZeroDimension);
    }
    if !(eps > 0.0 && eps <= 0.5) {
        return Err(Error::EpsOutOfRange(eps));
    }
    Ok(TsBounds {
        lower: TsBounds::grid_term(dim, eps).max(dim as u128),
        upper: ts_upper_bound(dim, eps),
    })
}

/// `(1.5 / eps)^d` without the range check of [`ts_bounds`].
pub fn ts_upper_bound(dim: usize, eps: f64) -> f64 {
    (1.5 / eps).powi(dim as i32)
}
